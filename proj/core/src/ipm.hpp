#pragma once

// Internal primal-dual interior-point engine for the conic backend.
// Solves   min c'x  s.t.  Aeq x = beq,  s = h - G x,  s in K
// where K = R+^l x SOC(q_1) x ... x PSD(m_1) x ...  via the homogeneous
// self-dual embedding with Nesterov-Todd scalings and Mehrotra correction.
// PSD blocks use the scaled vectorization svec (off-diagonals times sqrt(2))
// so that <svec(U), svec(V)> = tr(UV).

#include <vector>

#include "etmpc/types.hpp"

namespace etmpc::ipm {

// One row block of G/h: rows_of(s_block) = h_b - G_b * x(cols).
struct Block {
    std::vector<int> cols;  // variable columns touched by this block
    Mat G;                  // dim x cols.size()
    Vec h;                  // dim
};

struct Problem {
    int n = 0;
    Vec c;
    Mat Aeq;  // p x n (p may be 0)
    Vec beq;
    int l = 0;                // leading nonnegative-orthant rows
    std::vector<int> q;       // SOC dimensions
    std::vector<int> pm;      // PSD matrix sizes (svec lengths m(m+1)/2)
    std::vector<Block> lp;    // one block per LP row (dim 1 each)
    std::vector<Block> soc;   // aligned with q
    std::vector<Block> psd;   // aligned with pm, rows in svec coordinates
};

enum class IpmStatus {
    Optimal,
    OptimalInaccurate,
    PrimalInfeasible,
    DualInfeasible,
    MaxIters,
    Numerical,
    TimeLimit,
};

struct IpmSettings {
    double feastol = 1e-8;
    double abstol = 1e-7;
    double reltol = 1e-7;
    double feastol_inacc = 1e-4;
    double abstol_inacc = 5e-5;
    double reltol_inacc = 5e-5;
    int max_iters = 120;
    int refine_steps = 4;
    double static_reg = 1e-9;
    double step_scale = 0.99;   // fraction of the step to the boundary
    double sigma_min = 1e-4;
    double sigma_max = 0.9;
    double time_limit = 0.0;    // seconds, 0 = none
};

struct IpmResult {
    IpmStatus status = IpmStatus::Numerical;
    Vec x;
    Vec s;
    Vec z;
    Vec y;
    double pobj = 0.0;
    double dobj = 0.0;
    double pres = 0.0;
    double dres = 0.0;
    double gap = 0.0;
    int iters = 0;
};

IpmResult solve(const Problem& prob, const IpmSettings& settings);

// svec helpers (exposed for the conic translation layer and tests)
int svec_len(int m);
Vec svec(const Mat& M);
Mat smat(const Vec& v, int m);

} // namespace etmpc::ipm
