#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace trajopt::conic {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

enum class ConeKind { zero, nonnegative, second_order };

const char* to_string(ConeKind k);

struct ConeBlock {
    ConeKind kind;
    int dim;
};

struct ConeSpec {
    std::vector<ConeBlock> blocks;

    int total_dim() const;
    int dim_of(ConeKind k) const;
    std::vector<int> soc_dims() const;
};

// Rows are read as  A x + b  in K.  For a second-order block the first row is
// the epigraph variable, i.e. (t, v) with t >= ||v||.
struct ConicProgram {
    int num_vars = 0;
    Vec objective;
    SpMat A;
    Vec b;
    ConeSpec cones;
    std::vector<std::string> var_names;
    std::vector<std::string> row_labels;
    // row_permutation[i] is the index of the input row that became row i
    std::vector<int> row_permutation;

    int num_rows() const { return static_cast<int>(b.size()); }
    void validate() const;
};

class AssemblyError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ConstraintRow {
    std::vector<std::pair<int, double>> coeffs;
    double offset = 0.0;
    ConeKind tag = ConeKind::nonnegative;
    // rows sharing a group id (and contiguous in the input) form one SOC block
    int soc_group = -1;
    int width = -1; // set when the row was built from a dense vector
    std::string label;

    static ConstraintRow dense(const Vec& row, double offset, ConeKind tag, int soc_group = -1,
                               std::string label = {});
};

ConicProgram assemble(const Vec& objective, const std::vector<ConstraintRow>& rows,
                      std::vector<std::string> var_names = {});

enum class Status { optimal, infeasible, unbounded, max_iters, numerical_error };

const char* to_string(Status s);

enum class Method { interior_point, operator_splitting };

struct SolverSettings {
    double eps_abs = 1e-8;
    double eps_rel = 1e-8;
    int max_iters = 100000;
    bool scaling_enabled = true;
    Method method = Method::interior_point;
    bool verbose = false;

    void validate() const;
};

struct Residuals {
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;
};

struct ConicSolution {
    Status status = Status::numerical_error;
    Vec primal;
    Vec dual;
    Vec slack;
    double objective_value = 0.0;
    Residuals residuals;
    int iterations = 0;
    std::string message;
};

ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings = {});

// Dual y lives in K*, optimality reads c = A' y, dual objective is -b'y.
Residuals kkt_residuals(const ConicProgram& prog, const ConicSolution& sol);

// Scales used in the relative part of the stopping test.
struct ResidualScales {
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;
};
ResidualScales residual_scales(const ConicProgram& prog, const Vec& x, const Vec& y);
bool within_tolerance(const Residuals& r, const ResidualScales& s, const SolverSettings& settings);

// For infeasible: y in K*, b'y = -1, returns ||A'y||_inf plus cone violation.
// For unbounded: c'x = -1, returns the recession-direction residual.
double certificate_residual(const ConicProgram& prog, const ConicSolution& sol);
// eps_abs + eps_rel * max|A_ij|
double certificate_tolerance(const ConicProgram& prog, const SolverSettings& settings);

// Distance-like violation of v in the block structure (0 when inside).
double cone_violation(const ConeSpec& cones, const Vec& v);
Vec project_cone(const ConeSpec& cones, const Vec& v, bool dual);

void dump_json(const ConicProgram& prog, const std::string& path);
ConicProgram load_json(const std::string& path);

namespace detail {
ConicSolution solve_ipm(const ConicProgram& prog, const SolverSettings& settings);
ConicSolution solve_admm(const ConicProgram& prog, const SolverSettings& settings);

struct Equilibration {
    Vec D; // column scaling
    Vec E; // row scaling
};
Equilibration ruiz(const SpMat& A, const ConeSpec& cones, int passes = 15);
} // namespace detail

// ---------------------------------------------------------------------------
// Small modeling layer on top of assemble().

struct LinExpr {
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;

    LinExpr() = default;
    LinExpr(double c) : constant(c) {} // NOLINT
    static LinExpr var(int i, double coeff = 1.0);

    LinExpr& operator+=(const LinExpr& o);
    LinExpr& operator-=(const LinExpr& o);
    LinExpr& operator*=(double s);
    double eval(const Vec& x) const;
    void compress();
};

LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a);
LinExpr operator*(double s, LinExpr a);
LinExpr operator*(LinExpr a, double s);

using ExprVec = std::vector<LinExpr>;

// Affine map  M e  for a dense matrix M and expression vector e.
ExprVec affine(const Eigen::MatrixXd& M, const ExprVec& e);
ExprVec affine(const Eigen::MatrixXd& M, const ExprVec& e, const Vec& offset);
LinExpr dot(const Vec& a, const ExprVec& e);
ExprVec sub(const ExprVec& a, const ExprVec& b);
ExprVec add(const ExprVec& a, const ExprVec& b);
ExprVec constant(const Vec& v);

enum class NormKind { one, two, two_squared, inf };

class ProblemBuilder {
  public:
    int add_var(const std::string& name = {});
    ExprVec add_vars(int n, const std::string& name = {});
    int num_vars() const { return static_cast<int>(names_.size()); }

    void add_eq(const LinExpr& e, const std::string& label = {});
    void add_eq(const ExprVec& e, const std::string& label = {});
    void add_ge(const LinExpr& e, const std::string& label = {}); // e >= 0
    void add_le(const LinExpr& lhs, const LinExpr& rhs, const std::string& label = {});
    // head >= ||tail||_2
    void add_soc(const LinExpr& head, const ExprVec& tail, const std::string& label = {});
    // v^2 <= t (t >= 0 implied)
    void add_square_le(const LinExpr& v, const LinExpr& t, const std::string& label = {});
    // ||e||^2 <= t
    void add_sumsq_le(const ExprVec& e, const LinExpr& t, const std::string& label = {});
    // norm(e) <= bound for the selected norm; two_squared means ||e||_2^2
    void add_norm_le(const ExprVec& e, const LinExpr& bound, NormKind kind,
                     const std::string& label = {});
    // returns an expression t with norm(e) <= t enforced
    LinExpr norm_epigraph(const ExprVec& e, NormKind kind, const std::string& label = {});

    void minimize(const LinExpr& e);
    const LinExpr& objective() const { return obj_; }

    ConicProgram build() const;

  private:
    std::vector<std::string> names_;
    std::vector<ConstraintRow> rows_;
    LinExpr obj_;
    int next_group_ = 0;
};

} // namespace trajopt::conic
