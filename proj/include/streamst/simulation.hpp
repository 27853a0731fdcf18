#pragma once

#include <cstdint>
#include <vector>

#include "streamst/covariance.hpp"
#include "streamst/network.hpp"
#include "streamst/spacetime.hpp"

namespace streamst {

struct SimulationSpec {
    Vector beta = (Vector(4) << 10.0, 1.0, 0.0, -1.0).finished();  ///< intercept first
    std::vector<KernelSpec> kernels{{KernelFamily::TailDown, KernelShape::Exponential}};
    SpatialParams params{0.0, 1.0, 3.0, 10.0, 0.0, 1.0, 0.1};
    TransitionSpec transition = TransitionSpec::ar(0.8);
    double extra_noise_sd = 0.25;  ///< iid measurement noise outside the VAR recursion
    int T = 10;
    int first_time = 1;
    double missing_rate = 0.0;  ///< fraction of observed sites masked at each time point
    std::uint64_t seed = 1;

    void validate() const;
};

struct SimulatedData {
    Panel obs;         ///< masked responses; covariates named X1..Xk
    Vector obs_truth;  ///< unmasked responses, rows as in `obs`
    Panel pred;        ///< response-free panel for the prediction sites (empty when none)
    Vector pred_truth;
};

/// Simulates y = X beta + e + noise, with e following the stationary VAR(1)
/// recursion driven by innovations N(0, Sigma + sigma2_0 I). Observation and
/// prediction sites share one joint field. VAR-mode phi lists observation
/// sites first, then prediction sites.
SimulatedData simulate_panel(const StreamNetwork& net, const SiteSet& obs_sites, const SiteSet& pred_sites,
                             const SimulationSpec& spec);
inline SimulatedData simulate_panel(const StreamNetwork& net, const SiteSet& obs_sites, const SimulationSpec& spec) {
    return simulate_panel(net, obs_sites, {}, spec);
}

}  // namespace streamst
