#include "trajopt/conic.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace trajopt::conic {

const char* to_string(ConeKind k) {
    switch (k) {
    case ConeKind::zero: return "zero";
    case ConeKind::nonnegative: return "nonnegative";
    case ConeKind::second_order: return "second_order";
    }
    return "?";
}

const char* to_string(Status s) {
    switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::max_iters: return "max_iters";
    case Status::numerical_error: return "numerical_error";
    }
    return "?";
}

int ConeSpec::total_dim() const {
    int n = 0;
    for (const auto& b : blocks) n += b.dim;
    return n;
}

int ConeSpec::dim_of(ConeKind k) const {
    int n = 0;
    for (const auto& b : blocks)
        if (b.kind == k) n += b.dim;
    return n;
}

std::vector<int> ConeSpec::soc_dims() const {
    std::vector<int> out;
    for (const auto& b : blocks)
        if (b.kind == ConeKind::second_order) out.push_back(b.dim);
    return out;
}

void ConicProgram::validate() const {
    if (objective.size() != num_vars) throw AssemblyError("objective length differs from num_vars");
    if (A.cols() != num_vars) throw AssemblyError("constraint matrix column count differs from num_vars");
    if (A.rows() != b.size()) throw AssemblyError("constraint matrix rows differ from offset length");
    if (cones.total_dim() != b.size()) throw AssemblyError("cone dimensions differ from row count");
    int stage = 0;
    for (const auto& blk : cones.blocks) {
        if (blk.dim < 1) throw AssemblyError("cone block with non-positive dimension");
        int s = static_cast<int>(blk.kind);
        if (s < stage) throw AssemblyError("cone blocks out of order (zero, nonnegative, second_order)");
        stage = s;
    }
}

void SolverSettings::validate() const {
    if (!(eps_abs > 0) || !(eps_rel > 0)) throw std::invalid_argument("solver tolerances must be positive");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
}

ConstraintRow ConstraintRow::dense(const Vec& row, double offset, ConeKind tag, int soc_group,
                                   std::string label) {
    ConstraintRow r;
    for (int j = 0; j < row.size(); ++j)
        if (row[j] != 0.0) r.coeffs.emplace_back(j, row[j]);
    r.offset = offset;
    r.tag = tag;
    r.soc_group = soc_group;
    r.width = static_cast<int>(row.size());
    r.label = std::move(label);
    return r;
}

namespace {

std::string row_name(const std::vector<ConstraintRow>& rows, std::size_t i) {
    std::string s = "row " + std::to_string(i);
    if (!rows[i].label.empty()) s += " (" + rows[i].label + ")";
    return s;
}

} // namespace

ConicProgram assemble(const Vec& objective, const std::vector<ConstraintRow>& rows,
                      std::vector<std::string> var_names) {
    const int n = static_cast<int>(objective.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.width >= 0 && r.width != n)
            throw AssemblyError(row_name(rows, i) + ": coefficient length " + std::to_string(r.width) +
                                " but objective has " + std::to_string(n));
        for (const auto& [j, v] : r.coeffs) {
            if (j < 0 || j >= n)
                throw AssemblyError(row_name(rows, i) + ": column " + std::to_string(j) + " out of range");
            if (!std::isfinite(v)) throw AssemblyError(row_name(rows, i) + ": non-finite coefficient");
        }
        if (!std::isfinite(r.offset)) throw AssemblyError(row_name(rows, i) + ": non-finite offset");
    }

    // Collect SOC groups as contiguous runs.
    struct Group {
        ConeKind kind;
        std::vector<int> idx;
    };
    std::vector<Group> zero, nonneg, soc;
    std::vector<int> zero_rows, nn_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.tag == ConeKind::zero) {
            zero_rows.push_back(static_cast<int>(i));
        } else if (r.tag == ConeKind::nonnegative) {
            nn_rows.push_back(static_cast<int>(i));
        } else {
            bool cont = i > 0 && rows[i - 1].tag == ConeKind::second_order && r.soc_group >= 0 &&
                        rows[i - 1].soc_group == r.soc_group;
            if (cont) {
                soc.back().idx.push_back(static_cast<int>(i));
            } else {
                for (const auto& g : soc)
                    if (r.soc_group >= 0 && rows[g.idx.front()].soc_group == r.soc_group)
                        throw AssemblyError(row_name(rows, i) + ": second-order group is not contiguous");
                soc.push_back({ConeKind::second_order, {static_cast<int>(i)}});
            }
        }
    }

    ConicProgram prog;
    prog.num_vars = n;
    prog.objective = objective;
    for (double v : objective)
        if (!std::isfinite(v)) throw AssemblyError("objective: non-finite coefficient");
    std::vector<int> order;
    order.insert(order.end(), zero_rows.begin(), zero_rows.end());
    order.insert(order.end(), nn_rows.begin(), nn_rows.end());
    for (const auto& g : soc) order.insert(order.end(), g.idx.begin(), g.idx.end());

    if (!zero_rows.empty()) prog.cones.blocks.push_back({ConeKind::zero, static_cast<int>(zero_rows.size())});
    if (!nn_rows.empty())
        prog.cones.blocks.push_back({ConeKind::nonnegative, static_cast<int>(nn_rows.size())});
    for (const auto& g : soc) prog.cones.blocks.push_back({ConeKind::second_order, static_cast<int>(g.idx.size())});

    const int m = static_cast<int>(order.size());
    std::vector<Eigen::Triplet<double>> trips;
    prog.b.resize(m);
    prog.row_labels.resize(m);
    for (int i = 0; i < m; ++i) {
        const auto& r = rows[order[i]];
        for (const auto& [j, v] : r.coeffs)
            if (v != 0.0) trips.emplace_back(i, j, v);
        prog.b[i] = r.offset;
        prog.row_labels[i] = r.label;
    }
    prog.A.resize(m, n);
    prog.A.setFromTriplets(trips.begin(), trips.end());
    prog.A.makeCompressed();
    prog.row_permutation = order;
    prog.var_names = std::move(var_names);
    prog.validate();
    return prog;
}

// --- cone helpers -----------------------------------------------------------

double cone_violation(const ConeSpec& cones, const Vec& v) {
    double worst = 0.0;
    int off = 0;
    for (const auto& blk : cones.blocks) {
        if (blk.kind == ConeKind::zero) {
            for (int i = 0; i < blk.dim; ++i) worst = std::max(worst, std::abs(v[off + i]));
        } else if (blk.kind == ConeKind::nonnegative) {
            for (int i = 0; i < blk.dim; ++i) worst = std::max(worst, -v[off + i]);
        } else {
            double nt = v.segment(off + 1, blk.dim - 1).norm();
            worst = std::max(worst, nt - v[off]);
        }
        off += blk.dim;
    }
    return worst;
}

Vec project_cone(const ConeSpec& cones, const Vec& v, bool dual) {
    Vec out = v;
    int off = 0;
    for (const auto& blk : cones.blocks) {
        if (blk.kind == ConeKind::zero) {
            // zero cone has the free space as dual
            if (!dual) out.segment(off, blk.dim).setZero();
        } else if (blk.kind == ConeKind::nonnegative) {
            for (int i = 0; i < blk.dim; ++i) out[off + i] = std::max(0.0, v[off + i]);
        } else {
            double t = v[off];
            double nx = v.segment(off + 1, blk.dim - 1).norm();
            if (nx <= t) {
                // inside
            } else if (nx <= -t) {
                out.segment(off, blk.dim).setZero();
            } else {
                double a = 0.5 * (t + nx);
                out[off] = a;
                out.segment(off + 1, blk.dim - 1) = (a / nx) * v.segment(off + 1, blk.dim - 1);
            }
        }
        off += blk.dim;
    }
    return out;
}

namespace {

double dual_cone_violation(const ConeSpec& cones, const Vec& y) {
    double worst = 0.0;
    int off = 0;
    for (const auto& blk : cones.blocks) {
        if (blk.kind == ConeKind::nonnegative) {
            for (int i = 0; i < blk.dim; ++i) worst = std::max(worst, -y[off + i]);
        } else if (blk.kind == ConeKind::second_order) {
            worst = std::max(worst, y.segment(off + 1, blk.dim - 1).norm() - y[off]);
        }
        off += blk.dim;
    }
    return worst;
}

double inf_norm(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

} // namespace

Residuals kkt_residuals(const ConicProgram& prog, const ConicSolution& sol) {
    Residuals r;
    if (sol.primal.size() != prog.num_vars || sol.dual.size() != prog.num_rows()) {
        r.primal = r.dual = r.gap = std::numeric_limits<double>::infinity();
        return r;
    }
    Vec ax = prog.A * sol.primal + prog.b;
    r.primal = cone_violation(prog.cones, ax);
    Vec aty = prog.A.transpose() * sol.dual;
    r.dual = std::max(inf_norm(aty - prog.objective), dual_cone_violation(prog.cones, sol.dual));
    double pobj = prog.objective.dot(sol.primal);
    double dobj = -prog.b.dot(sol.dual);
    r.gap = std::abs(pobj - dobj);
    return r;
}

ResidualScales residual_scales(const ConicProgram& prog, const Vec& x, const Vec& y) {
    ResidualScales s;
    s.primal = std::max(inf_norm(prog.A * x), inf_norm(prog.b));
    s.dual = std::max(inf_norm(prog.A.transpose() * y), inf_norm(prog.objective));
    s.gap = std::max(std::abs(prog.objective.dot(x)), std::abs(prog.b.dot(y)));
    return s;
}

bool within_tolerance(const Residuals& r, const ResidualScales& s, const SolverSettings& st) {
    return r.primal <= st.eps_abs + st.eps_rel * s.primal && r.dual <= st.eps_abs + st.eps_rel * s.dual &&
           r.gap <= st.eps_abs + st.eps_rel * s.gap;
}

double certificate_residual(const ConicProgram& prog, const ConicSolution& sol) {
    if (sol.status == Status::infeasible) {
        double by = prog.b.dot(sol.dual);
        return inf_norm(prog.A.transpose() * sol.dual) + dual_cone_violation(prog.cones, sol.dual) +
               std::abs(by + 1.0);
    }
    if (sol.status == Status::unbounded) {
        // direction x with A x in K (recession) and c'x = -1
        Vec ax = prog.A * sol.primal;
        return cone_violation(prog.cones, ax) + std::abs(prog.objective.dot(sol.primal) + 1.0);
    }
    return 0.0;
}

double certificate_tolerance(const ConicProgram& prog, const SolverSettings& st) {
    double amax = 0.0;
    for (int k = 0; k < prog.A.outerSize(); ++k)
        for (SpMat::InnerIterator it(prog.A, k); it; ++it) amax = std::max(amax, std::abs(it.value()));
    return st.eps_abs + st.eps_rel * std::max(1.0, amax);
}

ConicSolution solve(const ConicProgram& prog, const SolverSettings& settings) {
    settings.validate();
    prog.validate();
    auto finite = [](const auto& v) { return v.size() == 0 || v.allFinite(); };
    bool ok = finite(prog.objective) && finite(prog.b);
    for (int k = 0; k < prog.A.outerSize() && ok; ++k)
        for (SpMat::InnerIterator it(prog.A, k); it; ++it)
            if (!std::isfinite(it.value())) ok = false;
    if (!ok) {
        ConicSolution s;
        s.status = Status::numerical_error;
        s.message = "non-finite problem data";
        s.primal = Vec::Zero(prog.num_vars);
        s.dual = Vec::Zero(prog.num_rows());
        s.slack = Vec::Zero(prog.num_rows());
        return s;
    }
    if (settings.method == Method::operator_splitting) return detail::solve_admm(prog, settings);
    return detail::solve_ipm(prog, settings);
}

// --- JSON -------------------------------------------------------------------

void dump_json(const ConicProgram& prog, const std::string& path) {
    nlohmann::json j;
    j["num_vars"] = prog.num_vars;
    j["objective"] = std::vector<double>(prog.objective.data(), prog.objective.data() + prog.objective.size());
    nlohmann::json trip = nlohmann::json::array();
    for (int k = 0; k < prog.A.outerSize(); ++k)
        for (SpMat::InnerIterator it(prog.A, k); it; ++it)
            trip.push_back({it.row(), it.col(), it.value()});
    j["triplets"] = trip;
    j["offsets"] = std::vector<double>(prog.b.data(), prog.b.data() + prog.b.size());
    nlohmann::json cones = nlohmann::json::array();
    for (const auto& blk : prog.cones.blocks) cones.push_back({{"kind", to_string(blk.kind)}, {"dim", blk.dim}});
    j["cones"] = cones;
    if (!prog.var_names.empty()) j["var_names"] = prog.var_names;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f << j.dump(1) << "\n";
}

ConicProgram load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    ConicProgram prog;
    prog.num_vars = j.at("num_vars").get<int>();
    auto obj = j.at("objective").get<std::vector<double>>();
    prog.objective = Eigen::Map<Vec>(obj.data(), static_cast<Eigen::Index>(obj.size()));
    auto off = j.at("offsets").get<std::vector<double>>();
    prog.b = Eigen::Map<Vec>(off.data(), static_cast<Eigen::Index>(off.size()));
    std::vector<Eigen::Triplet<double>> trips;
    for (const auto& t : j.at("triplets")) trips.emplace_back(t[0].get<int>(), t[1].get<int>(), t[2].get<double>());
    prog.A.resize(prog.b.size(), prog.num_vars);
    prog.A.setFromTriplets(trips.begin(), trips.end());
    for (const auto& c : j.at("cones")) {
        std::string k = c.at("kind");
        ConeKind kind = k == "zero" ? ConeKind::zero
                        : k == "nonnegative" ? ConeKind::nonnegative
                                             : ConeKind::second_order;
        prog.cones.blocks.push_back({kind, c.at("dim").get<int>()});
    }
    if (j.contains("var_names")) prog.var_names = j["var_names"].get<std::vector<std::string>>();
    prog.row_permutation.resize(prog.b.size());
    for (int i = 0; i < prog.b.size(); ++i) prog.row_permutation[i] = i;
    prog.validate();
    return prog;
}

// --- equilibration ----------------------------------------------------------

namespace detail {

Equilibration ruiz(const SpMat& A, const ConeSpec& cones, int passes) {
    const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
    Equilibration eq{Vec::Ones(n), Vec::Ones(m)};
    SpMat M = A;
    for (int pass = 0; pass < passes; ++pass) {
        Vec cmax = Vec::Zero(n), rmax = Vec::Zero(m);
        for (int k = 0; k < M.outerSize(); ++k)
            for (SpMat::InnerIterator it(M, k); it; ++it) {
                double a = std::abs(it.value());
                cmax[it.col()] = std::max(cmax[it.col()], a);
                rmax[it.row()] = std::max(rmax[it.row()], a);
            }
        // SOC blocks must be scaled uniformly to stay a cone
        int off = 0;
        for (const auto& blk : cones.blocks) {
            if (blk.kind == ConeKind::second_order) {
                double mx = rmax.segment(off, blk.dim).maxCoeff();
                rmax.segment(off, blk.dim).setConstant(mx);
            }
            off += blk.dim;
        }
        Vec dc(n), dr(m);
        for (int j = 0; j < n; ++j) dc[j] = cmax[j] > 0 ? 1.0 / std::sqrt(cmax[j]) : 1.0;
        for (int i = 0; i < m; ++i) dr[i] = rmax[i] > 0 ? 1.0 / std::sqrt(rmax[i]) : 1.0;
        for (int j = 0; j < n; ++j) dc[j] = std::clamp(dc[j], 1e-4, 1e4);
        for (int i = 0; i < m; ++i) dr[i] = std::clamp(dr[i], 1e-4, 1e4);
        M = dr.asDiagonal() * M * dc.asDiagonal();
        eq.D = eq.D.cwiseProduct(dc);
        eq.E = eq.E.cwiseProduct(dr);
        double dev = std::max((cmax.array() - 1.0).abs().maxCoeff(), rmax.size() ? (rmax.array() - 1.0).abs().maxCoeff() : 0.0);
        if (n == 0 || dev < 1e-3) break;
    }
    for (int j = 0; j < n; ++j) eq.D[j] = std::clamp(eq.D[j], 1e-6, 1e6);
    for (int i = 0; i < m; ++i) eq.E[i] = std::clamp(eq.E[i], 1e-6, 1e6);
    return eq;
}

} // namespace detail

// --- modeling layer ---------------------------------------------------------

LinExpr LinExpr::var(int i, double coeff) {
    LinExpr e;
    e.terms.emplace_back(i, coeff);
    return e;
}

LinExpr& LinExpr::operator+=(const LinExpr& o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    constant += o.constant;
    return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& o) {
    for (const auto& [j, v] : o.terms) terms.emplace_back(j, -v);
    constant -= o.constant;
    return *this;
}

LinExpr& LinExpr::operator*=(double s) {
    for (auto& t : terms) t.second *= s;
    constant *= s;
    return *this;
}

double LinExpr::eval(const Vec& x) const {
    double v = constant;
    for (const auto& [j, c] : terms) v += c * x[j];
    return v;
}

void LinExpr::compress() {
    std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<int, double>> out;
    for (const auto& t : terms) {
        if (!out.empty() && out.back().first == t.first)
            out.back().second += t.second;
        else
            out.push_back(t);
    }
    out.erase(std::remove_if(out.begin(), out.end(), [](const auto& t) { return t.second == 0.0; }), out.end());
    terms = std::move(out);
}

LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
LinExpr operator-(LinExpr a) { return a *= -1.0; }
LinExpr operator*(double s, LinExpr a) { return a *= s; }
LinExpr operator*(LinExpr a, double s) { return a *= s; }

ExprVec affine(const Eigen::MatrixXd& M, const ExprVec& e) {
    if (M.cols() != static_cast<Eigen::Index>(e.size())) throw std::invalid_argument("affine: size mismatch");
    ExprVec out(M.rows());
    for (int i = 0; i < M.rows(); ++i)
        for (int j = 0; j < M.cols(); ++j)
            if (M(i, j) != 0.0) out[i] += M(i, j) * e[j];
    return out;
}

ExprVec affine(const Eigen::MatrixXd& M, const ExprVec& e, const Vec& offset) {
    ExprVec out = affine(M, e);
    for (int i = 0; i < M.rows(); ++i) out[i].constant += offset[i];
    return out;
}

LinExpr dot(const Vec& a, const ExprVec& e) {
    LinExpr out;
    for (int i = 0; i < a.size(); ++i)
        if (a[i] != 0.0) out += a[i] * e[i];
    return out;
}

ExprVec sub(const ExprVec& a, const ExprVec& b) {
    ExprVec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

ExprVec add(const ExprVec& a, const ExprVec& b) {
    ExprVec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

ExprVec constant(const Vec& v) {
    ExprVec out(v.size());
    for (int i = 0; i < v.size(); ++i) out[i] = LinExpr(v[i]);
    return out;
}

int ProblemBuilder::add_var(const std::string& name) {
    names_.push_back(name);
    return static_cast<int>(names_.size()) - 1;
}

ExprVec ProblemBuilder::add_vars(int n, const std::string& name) {
    ExprVec out(n);
    for (int i = 0; i < n; ++i) out[i] = LinExpr::var(add_var(name.empty() ? name : name + "[" + std::to_string(i) + "]"));
    return out;
}

namespace {
ConstraintRow make_row(LinExpr e, ConeKind tag, int group, const std::string& label) {
    e.compress();
    ConstraintRow r;
    r.coeffs = std::move(e.terms);
    r.offset = e.constant;
    r.tag = tag;
    r.soc_group = group;
    r.label = label;
    return r;
}
} // namespace

void ProblemBuilder::add_eq(const LinExpr& e, const std::string& label) {
    rows_.push_back(make_row(e, ConeKind::zero, -1, label));
}

void ProblemBuilder::add_eq(const ExprVec& e, const std::string& label) {
    for (const auto& x : e) add_eq(x, label);
}

void ProblemBuilder::add_ge(const LinExpr& e, const std::string& label) {
    rows_.push_back(make_row(e, ConeKind::nonnegative, -1, label));
}

void ProblemBuilder::add_le(const LinExpr& lhs, const LinExpr& rhs, const std::string& label) {
    add_ge(rhs - lhs, label);
}

void ProblemBuilder::add_soc(const LinExpr& head, const ExprVec& tail, const std::string& label) {
    int g = next_group_++;
    rows_.push_back(make_row(head, ConeKind::second_order, g, label));
    for (const auto& e : tail) rows_.push_back(make_row(e, ConeKind::second_order, g, label));
}

void ProblemBuilder::add_square_le(const LinExpr& v, const LinExpr& t, const std::string& label) {
    // v^2 <= t  <=>  ||(2v, t-1)|| <= t+1
    add_soc(t + 1.0, {2.0 * v, t - 1.0}, label);
}

void ProblemBuilder::add_sumsq_le(const ExprVec& e, const LinExpr& t, const std::string& label) {
    ExprVec tail;
    tail.reserve(e.size() + 1);
    for (const auto& x : e) tail.push_back(2.0 * x);
    tail.push_back(t - 1.0);
    add_soc(t + 1.0, tail, label);
}

void ProblemBuilder::add_norm_le(const ExprVec& e, const LinExpr& bound, NormKind kind, const std::string& label) {
    switch (kind) {
    case NormKind::two: add_soc(bound, e, label); break;
    case NormKind::two_squared: add_sumsq_le(e, bound, label); break;
    case NormKind::inf:
        for (const auto& x : e) {
            add_le(x, bound, label);
            add_le(-x, bound, label);
        }
        break;
    case NormKind::one: {
        LinExpr sum;
        for (const auto& x : e) {
            LinExpr t = LinExpr::var(add_var(label.empty() ? "abs" : label + ".abs"));
            add_le(x, t, label);
            add_le(-x, t, label);
            sum += t;
        }
        add_le(sum, bound, label);
        break;
    }
    }
}

LinExpr ProblemBuilder::norm_epigraph(const ExprVec& e, NormKind kind, const std::string& label) {
    LinExpr t = LinExpr::var(add_var(label.empty() ? "norm" : label));
    add_norm_le(e, t, kind, label);
    return t;
}

void ProblemBuilder::minimize(const LinExpr& e) { obj_ += e; }

ConicProgram ProblemBuilder::build() const {
    Vec c = Vec::Zero(num_vars());
    for (const auto& [j, v] : obj_.terms) c[j] += v;
    return assemble(c, rows_, names_);
}

} // namespace trajopt::conic
