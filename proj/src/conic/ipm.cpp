// Primal-dual interior point on the homogeneous self-dual embedding.
// Internal form:  min c'x  s.t.  A x = b,  G x + s = h,  s in K.
#include "trajopt/conic.hpp"

#include "ldl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trajopt::conic::detail {

namespace {

struct SocScale {
    double eta = 1.0;
    Vec w; // normalized NT point, w'Jw = 1
};

struct Cone {
    int l = 0;              // nonnegative orthant size
    std::vector<int> q;     // SOC sizes
    std::vector<int> qoff;  // SOC offsets
    int m = 0;
    int degree() const { return l + static_cast<int>(q.size()); }
};

double jdot(const double* u, const double* v, int n) {
    double r = u[0] * v[0];
    for (int i = 1; i < n; ++i) r -= u[i] * v[i];
    return r;
}

// u'Ju computed as (u0-|u1|)(u0+|u1|)
double jnorm2(const double* u, int n) {
    double t = 0;
    for (int i = 1; i < n; ++i) t += u[i] * u[i];
    t = std::sqrt(t);
    return (u[0] - t) * (u[0] + t);
}

struct Scaling {
    Vec nn; // sqrt(s/z) for the orthant
    std::vector<SocScale> soc;

    // W v
    Vec apply(const Cone& K, const Vec& v) const {
        Vec out(v.size());
        for (int i = 0; i < K.l; ++i) out[i] = nn[i] * v[i];
        for (std::size_t c = 0; c < K.q.size(); ++c) {
            int o = K.qoff[c], n = K.q[c];
            const Vec& w = soc[c].w;
            double eta = soc[c].eta;
            double w1v1 = w.tail(n - 1).dot(v.segment(o + 1, n - 1));
            out[o] = eta * (w[0] * v[o] + w1v1);
            double f = v[o] + w1v1 / (1.0 + w[0]);
            out.segment(o + 1, n - 1) = eta * (v.segment(o + 1, n - 1) + f * w.tail(n - 1));
        }
        return out;
    }
    // W^{-1} v
    Vec apply_inv(const Cone& K, const Vec& v) const {
        Vec out(v.size());
        for (int i = 0; i < K.l; ++i) out[i] = v[i] / nn[i];
        for (std::size_t c = 0; c < K.q.size(); ++c) {
            int o = K.qoff[c], n = K.q[c];
            const Vec& w = soc[c].w;
            double eta = soc[c].eta;
            double w1v1 = w.tail(n - 1).dot(v.segment(o + 1, n - 1));
            out[o] = (w[0] * v[o] - w1v1) / eta;
            double f = -v[o] + w1v1 / (1.0 + w[0]);
            out.segment(o + 1, n - 1) = (v.segment(o + 1, n - 1) + f * w.tail(n - 1)) / eta;
        }
        return out;
    }
    Eigen::MatrixXd soc_dense(const Cone& K, std::size_t c) const {
        int n = K.q[c];
        const Vec& w = soc[c].w;
        Eigen::MatrixXd W(n, n);
        W(0, 0) = w[0];
        W.block(0, 1, 1, n - 1) = w.tail(n - 1).transpose();
        W.block(1, 0, n - 1, 1) = w.tail(n - 1);
        W.block(1, 1, n - 1, n - 1) = Eigen::MatrixXd::Identity(n - 1, n - 1) +
                                      w.tail(n - 1) * w.tail(n - 1).transpose() / (1.0 + w[0]);
        W *= soc[c].eta;
        return W;
    }
};

bool compute_scaling(const Cone& K, const Vec& s, const Vec& z, Scaling& W, Vec& lambda) {
    W.nn.resize(K.l);
    lambda.resize(K.m);
    for (int i = 0; i < K.l; ++i) {
        if (!(s[i] > 0 && z[i] > 0)) return false;
        W.nn[i] = std::sqrt(s[i] / z[i]);
        lambda[i] = std::sqrt(s[i] * z[i]);
    }
    W.soc.resize(K.q.size());
    for (std::size_t c = 0; c < K.q.size(); ++c) {
        int o = K.qoff[c], n = K.q[c];
        double sres = jnorm2(s.data() + o, n), zres = jnorm2(z.data() + o, n);
        if (!(sres > 0 && zres > 0 && s[o] > 0 && z[o] > 0)) return false;
        double sn = std::sqrt(sres), zn = std::sqrt(zres);
        Vec sb = s.segment(o, n) / sn, zb = z.segment(o, n) / zn;
        double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
        Vec w(n);
        w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
        w.tail(n - 1) = (sb.tail(n - 1) - zb.tail(n - 1)) / (2.0 * gamma);
        W.soc[c].w = w;
        W.soc[c].eta = std::sqrt(sn / zn);
    }
    Vec lz = W.apply(K, z);
    lambda.tail(K.m - K.l) = lz.tail(K.m - K.l);
    return true;
}

// Jordan product u o v
Vec jprod(const Cone& K, const Vec& u, const Vec& v) {
    Vec out(u.size());
    for (int i = 0; i < K.l; ++i) out[i] = u[i] * v[i];
    for (std::size_t c = 0; c < K.q.size(); ++c) {
        int o = K.qoff[c], n = K.q[c];
        out[o] = u.segment(o, n).dot(v.segment(o, n));
        out.segment(o + 1, n - 1) = u[o] * v.segment(o + 1, n - 1) + v[o] * u.segment(o + 1, n - 1);
    }
    return out;
}

// x with lambda o x = v
Vec jdiv(const Cone& K, const Vec& lam, const Vec& v) {
    Vec out(v.size());
    for (int i = 0; i < K.l; ++i) out[i] = v[i] / lam[i];
    for (std::size_t c = 0; c < K.q.size(); ++c) {
        int o = K.qoff[c], n = K.q[c];
        double rho = jnorm2(lam.data() + o, n);
        double l1v1 = lam.segment(o + 1, n - 1).dot(v.segment(o + 1, n - 1));
        double x0 = (lam[o] * v[o] - l1v1) / rho;
        out[o] = x0;
        out.segment(o + 1, n - 1) = (v.segment(o + 1, n - 1) - x0 * lam.segment(o + 1, n - 1)) / lam[o];
    }
    return out;
}

Vec identity(const Cone& K) {
    Vec e = Vec::Zero(K.m);
    for (int i = 0; i < K.l; ++i) e[i] = 1.0;
    for (std::size_t c = 0; c < K.q.size(); ++c) e[K.qoff[c]] = 1.0;
    return e;
}

// largest alpha with u + alpha du in K (capped at amax)
double max_step(const Cone& K, const Vec& u, const Vec& du, double amax) {
    double a = amax;
    for (int i = 0; i < K.l; ++i)
        if (du[i] < 0) a = std::min(a, -u[i] / du[i]);
    for (std::size_t c = 0; c < K.q.size(); ++c) {
        int o = K.qoff[c], n = K.q[c];
        double cc = jnorm2(u.data() + o, n);
        if (cc <= 0 || u[o] <= 0) return 0.0;
        double aa = jdot(du.data() + o, du.data() + o, n);
        double bb = jdot(u.data() + o, du.data() + o, n);
        // q(t) = aa t^2 + 2 bb t + cc
        double root = std::numeric_limits<double>::infinity();
        if (std::abs(aa) < 1e-300) {
            if (bb < 0) root = -cc / (2 * bb);
        } else {
            double disc = bb * bb - aa * cc;
            if (aa < 0) {
                // opens downward: positive root always exists
                double sq = std::sqrt(std::max(disc, 0.0));
                // roots (-bb -+ sq)/aa; pick smallest positive
                double r1 = (-bb + sq) / aa, r2 = (-bb - sq) / aa;
                double lo = std::min(r1, r2), hi = std::max(r1, r2);
                root = lo > 0 ? lo : hi;
            } else if (disc >= 0 && bb < 0) {
                double sq = std::sqrt(disc);
                // stable smaller root
                root = cc / (-bb + sq);
            }
        }
        if (du[o] < 0) root = std::min(root, -u[o] / du[o]);
        a = std::min(a, std::max(root, 0.0));
    }
    return a;
}

double cone_shift_needed(const Cone& K, const Vec& v) {
    double alpha = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < K.l; ++i) alpha = std::max(alpha, -v[i]);
    for (std::size_t c = 0; c < K.q.size(); ++c) {
        int o = K.qoff[c], n = K.q[c];
        alpha = std::max(alpha, v.segment(o + 1, n - 1).norm() - v[o]);
    }
    return alpha;
}

Vec shift_into_cone(const Cone& K, Vec v) {
    if (K.m == 0) return v;
    double alpha = cone_shift_needed(K, v);
    if (alpha >= -1e-8) v += (1.0 + std::max(alpha, 0.0)) * identity(K);
    return v;
}

class Kkt {
  public:
    Kkt(const SpMat& A, const SpMat& G, const Cone& K, double reg) : A_(A), G_(G), K_(K), reg_(reg) {
        n_ = static_cast<int>(std::max(A.cols(), G.cols()));
        p_ = static_cast<int>(A.rows());
        m_ = static_cast<int>(G.rows());
        AT_ = A.transpose();
        GT_ = G.transpose();
    }

    // Retries with a larger static regularization when the pivots break down;
    // refinement against the true matrix recovers the accuracy.
    bool factor(const Scaling& W) {
        W_ = &W;
        for (double r = reg_; r <= kMaxReg; r *= 100.0) {
            if (factor_with(W, r)) {
                used_ = r;
                return true;
            }
        }
        return false;
    }

    // next regularization level after a solve came back non-finite
    bool refactor_stronger() {
        for (double r = used_ * 100.0; r <= kMaxReg; r *= 100.0) {
            if (factor_with(*W_, r)) {
                used_ = r;
                return true;
            }
        }
        return false;
    }

    bool factor_with(const Scaling& W, double reg) {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(A_.nonZeros() + G_.nonZeros() + n_ + p_ + m_ * 4);
        for (int j = 0; j < n_; ++j) t.emplace_back(j, j, reg);
        for (int k = 0; k < A_.outerSize(); ++k)
            for (SpMat::InnerIterator it(A_, k); it; ++it) t.emplace_back(it.col(), n_ + it.row(), it.value());
        for (int k = 0; k < G_.outerSize(); ++k)
            for (SpMat::InnerIterator it(G_, k); it; ++it) t.emplace_back(it.col(), n_ + p_ + it.row(), it.value());
        for (int i = 0; i < p_; ++i) t.emplace_back(n_ + i, n_ + i, -reg);
        const int zo = n_ + p_;
        for (int i = 0; i < K_.l; ++i) t.emplace_back(zo + i, zo + i, -(W.nn[i] * W.nn[i]) - reg);
        for (std::size_t c = 0; c < K_.q.size(); ++c) {
            Eigen::MatrixXd Wd = W.soc_dense(K_, c);
            Eigen::MatrixXd W2 = Wd * Wd;
            int o = zo + K_.qoff[c], n = K_.q[c];
            for (int j = 0; j < n; ++j)
                for (int i = 0; i <= j; ++i) t.emplace_back(o + i, o + j, -W2(i, j) - (i == j ? reg : 0.0));
        }
        const int N = n_ + p_ + m_;
        SpMat KK(N, N);
        KK.setFromTriplets(t.begin(), t.end());
        if (!analyzed_) {
            std::vector<int> signs(N, -1);
            for (int j = 0; j < n_; ++j) signs[j] = 1;
            ldl_.analyze(KK, signs);
            analyzed_ = true;
        }
        return ldl_.factorize(KK);
    }

    // true K (without static regularization) times v
    Vec multiply(const Vec& v) const {
        Vec x = v.head(n_), y = v.segment(n_, p_), z = v.tail(m_);
        Vec out(v.size());
        out.head(n_) = AT_ * y + GT_ * z;
        out.segment(n_, p_) = A_ * x;
        out.tail(m_) = G_ * x - W_->apply(K_, W_->apply(K_, z));
        return out;
    }

    Vec solve(const Vec& rhs) const {
        Vec v = ldl_.solve(rhs);
        double nr = rhs.lpNorm<Eigen::Infinity>();
        for (int it = 0; it < 8; ++it) {
            Vec e = rhs - multiply(v);
            double ne = e.lpNorm<Eigen::Infinity>();
            if (!(ne > 1e-14 * (1.0 + nr))) break;
            Vec dv = ldl_.solve(e);
            Vec v2 = v + dv;
            double ne2 = (rhs - multiply(v2)).lpNorm<Eigen::Infinity>();
            if (!(ne2 < ne)) break;
            v = v2;
        }
        return v;
    }

    int n() const { return n_; }
    int p() const { return p_; }
    int m() const { return m_; }

  private:
    const SpMat& A_;
    const SpMat& G_;
    SpMat AT_, GT_;
    const Cone& K_;
    double reg_, used_ = 0.0;
    static constexpr double kMaxReg = 1e-4;
    int n_, p_, m_;
    const Scaling* W_ = nullptr;
    bool analyzed_ = false;
    QuasiDefiniteLdl ldl_;
};

struct Problem {
    SpMat A, G;
    Vec c, b, h;
    Cone K;
    Vec D, E; // equilibration (column, row)
    int p = 0;
};

} // namespace

ConicSolution solve_ipm(const ConicProgram& prog, const SolverSettings& st) {
    Problem P;
    const int n = prog.num_vars;
    P.p = prog.cones.dim_of(ConeKind::zero);
    const int p = P.p;
    const int m = prog.num_rows() - p;
    P.K.l = prog.cones.dim_of(ConeKind::nonnegative);
    P.K.m = m;
    int off = P.K.l;
    for (int d : prog.cones.soc_dims()) {
        P.K.q.push_back(d);
        P.K.qoff.push_back(off);
        off += d;
    }

    if (st.scaling_enabled && prog.num_rows() > 0) {
        auto eq = ruiz(prog.A, prog.cones);
        P.D = eq.D;
        P.E = eq.E;
    } else {
        P.D = Vec::Ones(n);
        P.E = Vec::Ones(prog.num_rows());
    }
    SpMat As = P.E.asDiagonal() * prog.A * P.D.asDiagonal();
    Vec bs = P.E.cwiseProduct(prog.b);
    P.A = As.topRows(p);
    P.b = -bs.head(p);
    P.G = -As.bottomRows(m);
    P.h = bs.tail(m);
    P.c = P.D.cwiseProduct(prog.objective);
    const Cone& K = P.K;

    ConicSolution best;
    best.status = Status::max_iters;
    best.primal = Vec::Zero(n);
    best.dual = Vec::Zero(prog.num_rows());
    best.slack = Vec::Zero(prog.num_rows());
    double best_score = std::numeric_limits<double>::infinity();

    // map internal iterate to the public convention
    auto extract = [&](const Vec& x, const Vec& y, const Vec& z, const Vec& s, double tau) {
        ConicSolution out;
        out.primal = P.D.cwiseProduct(x) / tau;
        Vec yd(prog.num_rows());
        yd.head(p) = -y;
        yd.tail(m) = z;
        out.dual = P.E.cwiseProduct(yd) / tau;
        Vec sl(prog.num_rows());
        sl.head(p).setZero();
        sl.tail(m) = s;
        out.slack = sl.cwiseQuotient(P.E) / tau;
        out.objective_value = prog.objective.dot(out.primal);
        out.residuals = kkt_residuals(prog, out);
        return out;
    };

    Kkt kkt(P.A, P.G, K, 1e-8);

    // initial point
    Scaling W;
    W.nn = Vec::Ones(K.l);
    W.soc.resize(K.q.size());
    for (std::size_t c = 0; c < K.q.size(); ++c) {
        W.soc[c].eta = 1.0;
        W.soc[c].w = Vec::Zero(K.q[c]);
        W.soc[c].w[0] = 1.0;
    }
    if (!kkt.factor(W)) {
        best.status = Status::numerical_error;
        best.message = "initial factorization failed";
        return best;
    }
    const int N = n + p + m;
    Vec rhs = Vec::Zero(N);
    rhs.segment(n, p) = P.b;
    rhs.tail(m) = P.h;
    Vec sol = kkt.solve(rhs);
    Vec x = sol.head(n);
    Vec s = shift_into_cone(K, -sol.tail(m));
    rhs.setZero();
    rhs.head(n) = -P.c;
    sol = kkt.solve(rhs);
    Vec y = sol.segment(n, p);
    Vec z = shift_into_cone(K, sol.tail(m));
    double tau = 1.0, kap = 1.0;

    const double infeas_tol = certificate_tolerance(prog, st);

    const int cap = std::min(st.max_iters, 200);
    const Vec e = identity(K);
    const int deg = K.degree();
    Vec lambda;
    int stall = 0;

    for (int iter = 0; iter <= cap; ++iter) {
        // --- convergence and certificates
        ConicSolution cand = extract(x, y, z, s, tau);
        cand.iterations = iter;
        auto scales = residual_scales(prog, cand.primal, cand.dual);
        if (cand.primal.allFinite() && cand.dual.allFinite() && within_tolerance(cand.residuals, scales, st)) {
            cand.status = Status::optimal;
            return cand;
        }
        {
            double sp = cand.residuals.primal / (st.eps_abs + st.eps_rel * scales.primal);
            double sd = cand.residuals.dual / (st.eps_abs + st.eps_rel * scales.dual);
            double sg = cand.residuals.gap / (st.eps_abs + st.eps_rel * scales.gap);
            double score = std::max({sp, sd, sg});
            if (std::isfinite(score) && score < best_score) {
                best_score = score;
                best = cand;
                best.status = Status::max_iters;
            }
        }
        if (tau < kap) {
            // primal infeasibility: b'y < 0 with A'y ~ 0
            Vec yd(prog.num_rows());
            yd.head(p) = -y;
            yd.tail(m) = z;
            yd = P.E.cwiseProduct(yd);
            double by = prog.b.dot(yd);
            if (by < 0) {
                ConicSolution cert;
                cert.status = Status::infeasible;
                cert.dual = yd / (-by);
                cert.primal = Vec::Zero(n);
                cert.slack = Vec::Zero(prog.num_rows());
                cert.iterations = iter;
                cert.objective_value = std::numeric_limits<double>::infinity();
                if (certificate_residual(prog, cert) <= infeas_tol) {
                    cert.residuals = kkt_residuals(prog, cert);
                    return cert;
                }
            }
            Vec xd = P.D.cwiseProduct(x);
            double cx = prog.objective.dot(xd);
            if (cx < 0) {
                ConicSolution cert;
                cert.status = Status::unbounded;
                cert.primal = xd / (-cx);
                cert.dual = Vec::Zero(prog.num_rows());
                cert.slack = Vec::Zero(prog.num_rows());
                cert.iterations = iter;
                cert.objective_value = -std::numeric_limits<double>::infinity();
                if (certificate_residual(prog, cert) <= infeas_tol) {
                    cert.residuals = kkt_residuals(prog, cert);
                    return cert;
                }
            }
        }
        if (iter == cap) break;

        // --- residuals of the embedding
        Vec fx = P.A.transpose() * y + P.G.transpose() * z + P.c * tau;
        Vec fy = -(P.A * x) + P.b * tau;
        Vec fz = -(P.G * x) + P.h * tau - s;
        double ft = -P.c.dot(x) - P.b.dot(y) - P.h.dot(z) - kap;
        double mu = (s.dot(z) + tau * kap) / (deg + 1);

        if (!compute_scaling(K, s, z, W, lambda)) {
            best.message = "iterate left the cone interior";
            if (best.status != Status::optimal) best.status = Status::numerical_error;
            return best;
        }
        if (!kkt.factor(W)) {
            best.message = "KKT factorization failed";
            best.status = Status::numerical_error;
            return best;
        }
        rhs.head(n) = -P.c;
        rhs.segment(n, p) = P.b;
        rhs.tail(m) = P.h;
        Vec v1 = kkt.solve(rhs);
        if (!v1.allFinite() && kkt.refactor_stronger()) v1 = kkt.solve(rhs);
        if (!v1.allFinite()) {
            best.message = "KKT solve produced non-finite values";
            if (best.status != Status::optimal) best.status = Status::numerical_error;
            return best;
        }
        const Vec x1 = v1.head(n), y1 = v1.segment(n, p), z1 = v1.tail(m);
        const double den1 = kap / tau - P.c.dot(x1) - P.b.dot(y1) - P.h.dot(z1);

        auto direction = [&](const Vec& dx_, const Vec& dy_, const Vec& dz_, double dt_, const Vec& ds_,
                             double dk_, Vec& dx, Vec& dy, Vec& dz, Vec& dsv, double& dtau, double& dkap) {
            Vec lds = jdiv(K, lambda, ds_);
            Vec wl = W.apply(K, lds);
            rhs.head(n) = dx_;
            rhs.segment(n, p) = -dy_;
            rhs.tail(m) = -dz_ - wl;
            Vec v2 = kkt.solve(rhs);
            Vec x2 = v2.head(n), y2 = v2.segment(n, p), z2 = v2.tail(m);
            dtau = (dt_ + dk_ / tau + P.c.dot(x2) + P.b.dot(y2) + P.h.dot(z2)) / den1;
            dx = x2 + dtau * x1;
            dy = y2 + dtau * y1;
            dz = z2 + dtau * z1;
            dsv = wl - W.apply(K, W.apply(K, dz));
            dkap = (dk_ - kap * dtau) / tau;
        };

        auto step_len = [&](const Vec& ds, const Vec& dz, double dtau, double dkap) {
            double a = 1.0;
            a = max_step(K, s, ds, a);
            a = max_step(K, z, dz, a);
            if (dtau < 0) a = std::min(a, -tau / dtau);
            if (dkap < 0) a = std::min(a, -kap / dkap);
            return a;
        };

        // affine predictor
        Vec dxa, dya, dza, dsa;
        double dta, dka;
        direction(-fx, -fy, -fz, -ft, -jprod(K, lambda, lambda), -kap * tau, dxa, dya, dza, dsa, dta, dka);
        double aa = step_len(dsa, dza, dta, dka);
        double sigma = std::clamp(std::pow(1.0 - aa, 3), 0.0, 1.0);

        // combined
        Vec corr = jprod(K, W.apply_inv(K, dsa), W.apply(K, dza));
        Vec dsr = -jprod(K, lambda, lambda) - corr + sigma * mu * e;
        double dkr = -kap * tau - dka * dta + sigma * mu;
        Vec dx, dy, dz, ds;
        double dtau, dkap;
        const double g = 1.0 - sigma;
        direction(-g * fx, -g * fy, -g * fz, -g * ft, dsr, dkr, dx, dy, dz, ds, dtau, dkap);
        double alpha = std::min(1.0, 0.99 * step_len(ds, dz, dtau, dkap));
        if (!dx.allFinite() || !ds.allFinite() || !std::isfinite(dtau) || !std::isfinite(dkap)) {
            best.message = "search direction is not finite";
            if (best.status != Status::optimal) best.status = Status::numerical_error;
            return best;
        }
        if (!(alpha > 1e-12)) {
            if (++stall > 2) {
                best.message = "step length collapsed";
                return best;
            }
        }
        x += alpha * dx;
        y += alpha * dy;
        z += alpha * dz;
        s += alpha * ds;
        tau += alpha * dtau;
        kap += alpha * dkap;
        if (!(tau > 0) || !(kap > 0) || !x.allFinite()) {
            best.message = "embedding scalars degenerated";
            if (best.status != Status::optimal) best.status = Status::numerical_error;
            return best;
        }
        // renormalize the embedding to keep magnitudes sane
        double nrm = std::max({tau, x.size() ? x.lpNorm<Eigen::Infinity>() : 0.0, 1.0});
        if (nrm > 1e8) {
            x /= nrm, y /= nrm, z /= nrm, s /= nrm, tau /= nrm, kap /= nrm;
        }
    }
    best.iterations = cap;
    if (best.message.empty()) best.message = "iteration limit reached";
    return best;
}

} // namespace trajopt::conic::detail
