#include "etmpc/conic.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <ostream>

#include "ipm.hpp"

namespace etmpc {

const char* to_string(SolveResult r)
{
    switch (r) {
        case SolveResult::Optimal: return "Optimal";
        case SolveResult::Infeasible: return "Infeasible";
        case SolveResult::Unbounded: return "Unbounded";
        case SolveResult::NumericalFailure: return "NumericalFailure";
        case SolveResult::TimeLimit: return "TimeLimit";
    }
    return "?";
}

SolverSettings SolverSettings::from_env()
{
    SolverSettings s;
    if (const char* tol = std::getenv("ETMPC_SOLVER_TOL")) {
        const double v = std::atof(tol);
        if (v > 0.0) {
            s.feastol = v;
            s.abstol = v;
            s.reltol = v;
        }
    }
    if (const char* it = std::getenv("ETMPC_SOLVER_MAXIT")) {
        const int v = std::atoi(it);
        if (v > 0) s.max_iters = v;
    }
    if (const char* tl = std::getenv("ETMPC_SOLVER_TIMELIMIT")) {
        const double v = std::atof(tl);
        if (v > 0.0) s.time_limit = v;
    }
    return s;
}

int ConicProgram::add_vars(const std::string& name, int count)
{
    if (vars_.count(name)) throw std::invalid_argument("duplicate variable name: " + name);
    if (count <= 0) throw std::invalid_argument("variable count must be positive");
    const int first = n_;
    vars_[name] = {first, count};
    n_ += count;
    c_.conservativeResize(n_);
    c_.tail(count).setZero();
    return first;
}

int ConicProgram::var(const std::string& name) const
{
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("unknown variable: " + name);
    return it->second.first;
}

int ConicProgram::var_size(const std::string& name) const
{
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("unknown variable: " + name);
    return it->second.second;
}

void ConicProgram::add_objective(int col, double coef)
{
    c_(col) += coef;
}

void ConicProgram::add_soc(std::vector<LinExpr> rows)
{
    if (rows.size() < 2) throw std::invalid_argument("SOC block needs dimension >= 2");
    soc_.push_back(std::move(rows));
}

void ConicProgram::add_rotated_soc(const LinExpr& u, const LinExpr& v, const std::vector<LinExpr>& w)
{
    // u*v >= ||w||^2, u,v >= 0  <=>  u+v >= ||(u-v, 2w)||
    auto combine = [](const LinExpr& a, const LinExpr& b, double sb) {
        LinExpr out = a;
        for (std::size_t i = 0; i < b.cols.size(); ++i) out.add(b.cols[i], sb * b.coef[i]);
        out.offset += sb * b.offset;
        return out;
    };
    std::vector<LinExpr> rows;
    rows.push_back(combine(u, v, 1.0));
    rows.push_back(combine(u, v, -1.0));
    for (const LinExpr& e : w) {
        LinExpr r = e;
        for (double& cc : r.coef) cc *= 2.0;
        r.offset *= 2.0;
        rows.push_back(std::move(r));
    }
    add_soc(std::move(rows));
}

void ConicProgram::add_psd(const Mat& F0, const std::vector<std::pair<int, Mat>>& terms)
{
    if (F0.rows() != F0.cols()) throw std::invalid_argument("PSD block must be square");
    for (const auto& [col, Fi] : terms) {
        if (Fi.rows() != F0.rows() || Fi.cols() != F0.cols())
            throw std::invalid_argument("PSD term dimension mismatch");
        if (col < 0 || col >= n_) throw std::invalid_argument("PSD term column out of range");
    }
    psd_f0_.push_back(F0);
    psd_terms_.push_back(terms);
}

void ConicProgram::relax_inequalities(int slack_col)
{
    for (LinExpr& e : ineq_) e.add(slack_col, -1.0);
}

std::vector<int> ConicProgram::soc_dims() const
{
    std::vector<int> d;
    d.reserve(soc_.size());
    for (const auto& blk : soc_) d.push_back(static_cast<int>(blk.size()));
    return d;
}

Vec ConicProgram::objective_dense() const
{
    return c_;
}

double ConicProgram::max_violation(const Vec& x) const
{
    return max_violation_desc(x).first;
}

std::pair<double, std::string> ConicProgram::max_violation_desc(const Vec& x) const
{
    double worst = 0.0;
    std::string where = "none";
    auto note = [&](double v, const char* kind, std::size_t idx) {
        if (v > worst) {
            worst = v;
            where = std::string(kind) + " " + std::to_string(idx);
        }
    };
    for (std::size_t i = 0; i < eq_.size(); ++i) note(std::abs(eq_[i].eval(x)), "eq", i);
    for (std::size_t i = 0; i < ineq_.size(); ++i) note(ineq_[i].eval(x), "ineq", i);
    for (std::size_t k = 0; k < soc_.size(); ++k) {
        const auto& blk = soc_[k];
        double head = blk[0].eval(x);
        double tail2 = 0.0;
        for (std::size_t i = 1; i < blk.size(); ++i) {
            const double v = blk[i].eval(x);
            tail2 += v * v;
        }
        note(std::sqrt(tail2) - head, "soc", k);
    }
    for (std::size_t k = 0; k < psd_f0_.size(); ++k) {
        Mat F = psd_f0_[k];
        for (const auto& [col, Fi] : psd_terms_[k]) F += x(col) * Fi;
        Eigen::SelfAdjointEigenSolver<Mat> es(F, Eigen::EigenvaluesOnly);
        note(-es.eigenvalues().minCoeff(), "psd", k);
    }
    return {worst, where};
}

void ConicProgram::write_text(std::ostream& os) const
{
    os << "vars " << n_ << "\n";
    for (const auto& [name, range] : vars_)
        os << "var " << name << " " << range.first << " " << range.second << "\n";
    os << "objective";
    for (int i = 0; i < n_; ++i)
        if (c_(i) != 0.0) os << " " << i << ":" << c_(i);
    os << "\n";
    auto dump_expr = [&os](const LinExpr& e) {
        for (std::size_t i = 0; i < e.cols.size(); ++i) os << " " << e.cols[i] << ":" << e.coef[i];
        os << " const:" << e.offset;
    };
    for (const LinExpr& e : eq_) {
        os << "eq";
        dump_expr(e);
        os << "\n";
    }
    for (const LinExpr& e : ineq_) {
        os << "ineq";
        dump_expr(e);
        os << "\n";
    }
    for (const auto& blk : soc_) {
        os << "soc " << blk.size() << "\n";
        for (const LinExpr& e : blk) {
            os << "  row";
            dump_expr(e);
            os << "\n";
        }
    }
    for (std::size_t k = 0; k < psd_f0_.size(); ++k) {
        os << "psd " << psd_f0_[k].rows() << "\n";
    }
}

namespace {

// Collapses duplicate columns and drops explicit zeros.
void normalize_expr(const LinExpr& e, std::map<int, double>& out)
{
    out.clear();
    for (std::size_t i = 0; i < e.cols.size(); ++i) out[e.cols[i]] += e.coef[i];
}

ipm::Block make_block(const std::vector<const LinExpr*>& rows)
{
    std::map<int, double> tmp;
    std::map<int, int> col_index;
    for (const LinExpr* e : rows)
        for (int cc : e->cols) col_index.emplace(cc, 0);
    int k = 0;
    for (auto& [cc, idx] : col_index) idx = k++;

    ipm::Block b;
    b.cols.resize(col_index.size());
    for (const auto& [cc, idx] : col_index) b.cols[idx] = cc;
    b.G = Mat::Zero(static_cast<int>(rows.size()), static_cast<int>(col_index.size()));
    b.h = Vec::Zero(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        normalize_expr(*rows[r], tmp);
        // s_r = expr_r(x) = h_r - G_r x  =>  h_r = offset, G_r = -coef
        b.h(static_cast<int>(r)) = rows[r]->offset;
        for (const auto& [cc, cv] : tmp) b.G(static_cast<int>(r), col_index[cc]) = -cv;
    }
    return b;
}

ipm::Problem to_standard_form(const ConicProgram& cp)
{
    ipm::Problem p;
    p.n = cp.num_vars();
    p.c = cp.objective_dense();

    const auto& eqs = cp.equalities();
    p.Aeq = Mat::Zero(static_cast<int>(eqs.size()), p.n);
    p.beq = Vec::Zero(static_cast<int>(eqs.size()));
    std::map<int, double> tmp;
    for (std::size_t r = 0; r < eqs.size(); ++r) {
        normalize_expr(eqs[r], tmp);
        for (const auto& [cc, cv] : tmp) p.Aeq(static_cast<int>(r), cc) = cv;
        p.beq(static_cast<int>(r)) = -eqs[r].offset;
    }

    for (const LinExpr& e : cp.inequalities()) {
        // expr <= 0  =>  s = -expr >= 0
        LinExpr neg = e;
        for (double& cv : neg.coef) cv = -cv;
        neg.offset = -neg.offset;
        p.lp.push_back(make_block({&neg}));
        p.l += 1;
    }
    for (const auto& blk : cp.soc_blocks()) {
        std::vector<const LinExpr*> rows;
        rows.reserve(blk.size());
        for (const LinExpr& e : blk) rows.push_back(&e);
        p.soc.push_back(make_block(rows));
        p.q.push_back(static_cast<int>(blk.size()));
    }
    for (std::size_t k = 0; k < cp.psd_f0().size(); ++k) {
        const Mat& F0 = cp.psd_f0()[k];
        const int mm = static_cast<int>(F0.rows());
        ipm::Block b;
        b.h = ipm::svec(F0);
        std::map<int, int> col_index;
        for (const auto& [col, Fi] : cp.psd_terms()[k]) col_index.emplace(col, 0);
        int idx = 0;
        for (auto& [col, i] : col_index) i = idx++;
        b.cols.resize(col_index.size());
        for (const auto& [col, i] : col_index) b.cols[i] = col;
        b.G = Mat::Zero(ipm::svec_len(mm), static_cast<int>(col_index.size()));
        for (const auto& [col, Fi] : cp.psd_terms()[k])
            b.G.col(col_index[col]) -= ipm::svec(Fi);
        p.psd.push_back(std::move(b));
        p.pm.push_back(mm);
    }
    return p;
}

SolveStatus run(const ConicProgram& cp, const SolverSettings& settings)
{
    const auto t0 = std::chrono::steady_clock::now();
    ipm::IpmSettings is;
    is.feastol = settings.feastol;
    is.abstol = settings.abstol;
    is.reltol = settings.reltol;
    is.max_iters = settings.max_iters;
    is.refine_steps = settings.refine_steps;
    is.static_reg = settings.static_reg;
    is.time_limit = settings.time_limit;

    ipm::IpmResult r = ipm::solve(to_standard_form(cp), is);

    SolveStatus st;
    st.iterations = r.iters;
    st.primal_residual = r.pres;
    st.dual_residual = r.dres;
    st.duality_gap = r.gap;
    switch (r.status) {
        case ipm::IpmStatus::Optimal:
            st.result = SolveResult::Optimal;
            st.objective = r.pobj;
            st.primal = r.x;
            break;
        case ipm::IpmStatus::PrimalInfeasible: st.result = SolveResult::Infeasible; break;
        case ipm::IpmStatus::DualInfeasible: st.result = SolveResult::Unbounded; break;
        case ipm::IpmStatus::TimeLimit: st.result = SolveResult::TimeLimit; break;
        case ipm::IpmStatus::OptimalInaccurate:
        case ipm::IpmStatus::MaxIters:
        case ipm::IpmStatus::Numerical: st.result = SolveResult::NumericalFailure; break;
    }
    st.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
}

} // namespace

SolveStatus solve_socp(const ConicProgram& cp, const SolverSettings& settings)
{
    if (cp.num_psd_blocks() > 0)
        throw std::invalid_argument("solve_socp: program contains PSD blocks");
    return run(cp, settings);
}

SolveStatus solve_sdp(const ConicProgram& cp, const SolverSettings& settings)
{
    return run(cp, settings);
}

SolveStatus solve_lp(const ConicProgram& cp, const SolverSettings& settings)
{
    if (cp.num_soc_blocks() > 0 || cp.num_psd_blocks() > 0)
        throw std::invalid_argument("solve_lp: program contains cone blocks");
    return run(cp, settings);
}

} // namespace etmpc
