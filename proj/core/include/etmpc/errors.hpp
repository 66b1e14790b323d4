#pragma once

#include <stdexcept>
#include <string>

namespace etmpc {

struct NotPositiveDefinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Lemma-1 certificate cannot exist: the disturbance set is too large for the
/// chosen sigma, i.e. V^{-1} - w w'/sigma^2 loses definiteness. The offline
/// design must be redone with a larger sigma (or smaller W).
struct SigmaTooSmall : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DesignError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InitialInfeasible : std::runtime_error {
    explicit InitialInfeasible(const std::string& msg, double max_slack_ = 0.0)
        : std::runtime_error(msg), max_slack(max_slack_)
    {
    }
    double max_slack;
};

struct DivergentRollout : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace etmpc
