#pragma once
// Up-looking sparse LDL' for quasi-definite matrices with sign-aware dynamic
// regularization of small pivots.

#include "trajopt/conic.hpp"

#include <Eigen/OrderingMethods>

namespace trajopt::conic::detail {

class QuasiDefiniteLdl {
  public:
    // upper: upper triangle (column major). signs: expected pivot sign per row.
    void analyze(const SpMat& upper, const std::vector<int>& signs);
    bool factorize(const SpMat& upper, double eps = 1e-13, double delta = 7e-8);
    Vec solve(const Vec& b) const;
    int regularized() const { return nreg_; }

  private:
    int n_ = 0;
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> P_, Pinv_;
    std::vector<int> parent_, nnz_col_, Lp_, sign_perm_;
    std::vector<int> Li_;
    std::vector<double> Lx_, D_;
    SpMat ap_;
    int nreg_ = 0;

    void permute(const SpMat& upper);
};

} // namespace trajopt::conic::detail
