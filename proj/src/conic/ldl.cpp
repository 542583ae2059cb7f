#include "ldl.hpp"

#include <cmath>

namespace trajopt::conic::detail {

void QuasiDefiniteLdl::permute(const SpMat& upper) {
    ap_.resize(n_, n_);
    ap_.selfadjointView<Eigen::Upper>() = upper.selfadjointView<Eigen::Upper>().twistedBy(P_);
}

void QuasiDefiniteLdl::analyze(const SpMat& upper, const std::vector<int>& signs) {
    n_ = static_cast<int>(upper.rows());
    SpMat C;
    C = upper.selfadjointView<Eigen::Upper>();
    Eigen::AMDOrdering<int> ord;
    ord(C, Pinv_);
    P_ = Pinv_.inverse();
    permute(upper);

    sign_perm_.assign(n_, 1);
    for (int i = 0; i < n_; ++i) sign_perm_[P_.indices()[i]] = signs[i];

    parent_.assign(n_, -1);
    nnz_col_.assign(n_, 0);
    std::vector<int> tags(n_);
    for (int k = 0; k < n_; ++k) {
        tags[k] = k;
        for (SpMat::InnerIterator it(ap_, k); it; ++it) {
            int i = static_cast<int>(it.index());
            if (i < k) {
                for (; tags[i] != k; i = parent_[i]) {
                    if (parent_[i] == -1) parent_[i] = k;
                    nnz_col_[i]++;
                    tags[i] = k;
                }
            }
        }
    }
    Lp_.assign(n_ + 1, 0);
    for (int k = 0; k < n_; ++k) Lp_[k + 1] = Lp_[k] + nnz_col_[k];
    Li_.assign(Lp_[n_], 0);
    Lx_.assign(Lp_[n_], 0.0);
    D_.assign(n_, 0.0);
}

bool QuasiDefiniteLdl::factorize(const SpMat& upper, double eps, double delta) {
    permute(upper);
    std::vector<double> y(n_, 0.0);
    std::vector<int> pattern(n_), tags(n_), cnt(n_, 0);
    nreg_ = 0;
    for (int k = 0; k < n_; ++k) {
        y[k] = 0.0;
        int top = n_;
        tags[k] = k;
        cnt[k] = 0;
        for (SpMat::InnerIterator it(ap_, k); it; ++it) {
            int i = static_cast<int>(it.index());
            if (i <= k) {
                y[i] += it.value();
                int len = 0;
                for (; tags[i] != k; i = parent_[i]) {
                    pattern[len++] = i;
                    tags[i] = k;
                }
                while (len > 0) pattern[--top] = pattern[--len];
            }
        }
        double d = y[k];
        y[k] = 0.0;
        for (; top < n_; ++top) {
            int i = pattern[top];
            double yi = y[i];
            y[i] = 0.0;
            double lki = yi / D_[i];
            int p2 = Lp_[i] + cnt[i];
            for (int p = Lp_[i]; p < p2; ++p) y[Li_[p]] -= Lx_[p] * yi;
            d -= lki * yi;
            Li_[p2] = k;
            Lx_[p2] = lki;
            ++cnt[i];
        }
        if (sign_perm_[k] * d <= eps) {
            d = sign_perm_[k] * delta;
            ++nreg_;
        }
        if (!std::isfinite(d)) return false;
        D_[k] = d;
    }
    return true;
}

Vec QuasiDefiniteLdl::solve(const Vec& b) const {
    Vec x = P_ * b;
    for (int j = 0; j < n_; ++j)
        for (int p = Lp_[j]; p < Lp_[j + 1]; ++p) x[Li_[p]] -= Lx_[p] * x[j];
    for (int j = 0; j < n_; ++j) x[j] /= D_[j];
    for (int j = n_ - 1; j >= 0; --j)
        for (int p = Lp_[j]; p < Lp_[j + 1]; ++p) x[j] -= Lx_[p] * x[Li_[p]];
    return Pinv_ * x;
}

} // namespace trajopt::conic::detail
