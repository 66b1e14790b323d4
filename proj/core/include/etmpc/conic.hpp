#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "etmpc/types.hpp"

namespace etmpc {

/// Sparse affine expression  sum_i coef[i]*x[cols[i]] + offset.
struct LinExpr {
    std::vector<int> cols;
    std::vector<double> coef;
    double offset = 0.0;

    LinExpr() = default;
    explicit LinExpr(double constant) : offset(constant) {}

    LinExpr& add(int col, double c)
    {
        if (c != 0.0) {
            cols.push_back(col);
            coef.push_back(c);
        }
        return *this;
    }
    /// Appends a contiguous variable block scaled by a dense row.
    LinExpr& add_block(int first_col, const Vec& row)
    {
        for (int i = 0; i < row.size(); ++i) add(first_col + i, row(i));
        return *this;
    }
    double eval(const Vec& x) const
    {
        double v = offset;
        for (std::size_t i = 0; i < cols.size(); ++i) v += coef[i] * x(cols[i]);
        return v;
    }
};

enum class SolveResult { Optimal, Infeasible, Unbounded, NumericalFailure, TimeLimit };

const char* to_string(SolveResult r);

struct SolveStatus {
    SolveResult result = SolveResult::NumericalFailure;
    double objective = std::numeric_limits<double>::quiet_NaN();
    Vec primal;  // populated when result == Optimal
    int iterations = 0;
    double solve_time = 0.0;  // seconds
    double primal_residual = std::numeric_limits<double>::quiet_NaN();
    double dual_residual = std::numeric_limits<double>::quiet_NaN();
    double duality_gap = std::numeric_limits<double>::quiet_NaN();

    bool optimal() const { return result == SolveResult::Optimal; }
};

struct SolverSettings {
    double feastol = 1e-8;  // primal/dual KKT residual tolerance
    double abstol = 1e-7;   // absolute duality-gap tolerance
    double reltol = 1e-7;   // relative duality-gap tolerance
    int max_iters = 120;
    double time_limit = 0.0;  // seconds; 0 disables
    int refine_steps = 4;
    double static_reg = 1e-9;

    /// Applies ETMPC_SOLVER_TOL (sets feastol/abstol/reltol) and
    /// ETMPC_SOLVER_MAXIT when present in the environment.
    static SolverSettings from_env();
};

/// Standard-form conic program: minimize c'x subject to linear equalities,
/// linear inequalities, second-order cone blocks and (for the offline design)
/// positive-semidefinite blocks. Variables are introduced through named
/// contiguous ranges so solutions can be unpacked by name.
class ConicProgram {
public:
    int add_vars(const std::string& name, int count);
    int var(const std::string& name) const;
    bool has_var(const std::string& name) const { return vars_.count(name) > 0; }
    int var_size(const std::string& name) const;
    int num_vars() const { return n_; }

    void add_objective(int col, double coef);

    /// expr == 0
    void add_equality(LinExpr expr) { eq_.push_back(std::move(expr)); }
    /// expr <= 0
    void add_inequality(LinExpr expr) { ineq_.push_back(std::move(expr)); }
    /// rows[0] >= || (rows[1], ..., rows[k-1]) ||_2, k >= 2
    void add_soc(std::vector<LinExpr> rows);
    /// u*v >= ||w||^2 with u, v >= 0 (emitted as one standard cone)
    void add_rotated_soc(const LinExpr& u, const LinExpr& v, const std::vector<LinExpr>& w);
    /// F0 + sum_i x[terms[i].first]*terms[i].second is positive semidefinite
    void add_psd(const Mat& F0, const std::vector<std::pair<int, Mat>>& terms);

    /// Appends -slack_col to every inequality row recorded so far.
    void relax_inequalities(int slack_col);
    void clear_objective() { c_.setZero(); }

    int num_equalities() const { return static_cast<int>(eq_.size()); }
    int num_inequalities() const { return static_cast<int>(ineq_.size()); }
    int num_soc_blocks() const { return static_cast<int>(soc_.size()); }
    int num_psd_blocks() const { return static_cast<int>(psd_f0_.size()); }
    std::vector<int> soc_dims() const;

    const std::vector<LinExpr>& equalities() const { return eq_; }
    const std::vector<LinExpr>& inequalities() const { return ineq_; }
    const std::vector<std::vector<LinExpr>>& soc_blocks() const { return soc_; }

    const Vec& objective() const { return c_; }
    Vec objective_dense() const;

    /// Residual diagnostics for a candidate point: worst equality violation,
    /// worst inequality violation and worst cone violation (positive = violated).
    double max_violation(const Vec& x) const;
    /// Same scan, also naming the worst row ("eq 3", "ineq 12", "soc 7", "psd 0").
    std::pair<double, std::string> max_violation_desc(const Vec& x) const;

    /// Plain-text dump of the standard-form data (columns, rows, cones).
    void write_text(std::ostream& os) const;

    // solver-facing accessors
    const std::vector<Mat>& psd_f0() const { return psd_f0_; }
    const std::vector<std::vector<std::pair<int, Mat>>>& psd_terms() const { return psd_terms_; }

private:
    int n_ = 0;
    Vec c_;
    std::map<std::string, std::pair<int, int>> vars_;  // name -> (first col, count)
    std::vector<LinExpr> eq_;
    std::vector<LinExpr> ineq_;
    std::vector<std::vector<LinExpr>> soc_;
    std::vector<Mat> psd_f0_;
    std::vector<std::vector<std::pair<int, Mat>>> psd_terms_;
};

/// Second-order cone programs (linear + SOC rows). Throws std::invalid_argument
/// if the program contains PSD blocks.
SolveStatus solve_socp(const ConicProgram& cp, const SolverSettings& settings = SolverSettings::from_env());

/// Semidefinite programs; accepts any mix of linear, SOC and PSD blocks.
SolveStatus solve_sdp(const ConicProgram& cp, const SolverSettings& settings = SolverSettings::from_env());

/// Pure linear programs. Throws std::invalid_argument on cone blocks.
SolveStatus solve_lp(const ConicProgram& cp, const SolverSettings& settings = SolverSettings::from_env());

} // namespace etmpc
