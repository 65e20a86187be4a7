#pragma once

#include <stdexcept>
#include <string>

namespace empilab {

/// Shape mismatch between an MDP and a policy / shaping function / estimate.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A stochasticity or range invariant failed at construction time.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// An importance ratio pi'(a|s)/pi(a|s) was formed where pi(a|s) = 0 but
/// pi'(a|s) > 0.
struct SupportViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A trust-region precondition (average KL within the radius) did not hold.
struct TrustRegionViolation : std::runtime_error {
    TrustRegionViolation(const std::string& what, double measured_kl_avg)
        : std::runtime_error(what), measured_kl(measured_kl_avg) {}
    double measured_kl;
};

/// An MDP interchange file failed to parse or validate.
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace empilab
