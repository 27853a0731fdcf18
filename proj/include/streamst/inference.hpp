#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamst/covariance.hpp"
#include "streamst/network.hpp"
#include "streamst/random.hpp"
#include "streamst/spacetime.hpp"
#include "streamst/types.hpp"

namespace streamst {

struct ModelSpec {
    std::vector<KernelSpec> kernels;
    TemporalMode mode = TemporalMode::AR;
};

/// Non-informative priors: uniform phi, uniform ranges and standard deviations,
/// Gaussian regression coefficients with variance `beta_var`.
struct PriorSpec {
    double phi_lower = -1.0;
    double phi_upper = 1.0;
    double range_upper = 1.0;  ///< 4 x largest hydrologic distance among observed sites
    double sd_upper = 100.0;
    double beta_var = 1000.0;

    static PriorSpec for_sites(const StreamNetwork& net, const SiteSet& obs_sites);
    void validate() const;
};

struct ParamState {
    Vector beta;
    Vector phi;  ///< one value (AR) or one per location (VAR)
    double sigma_u = 0.0, alpha_u = 1.0;
    double sigma_d = 0.0, alpha_d = 1.0;
    double sigma_e = 0.0, alpha_e = 1.0;
    double sigma_0 = 0.0;
    Vector y_missing;  ///< in Panel::missing_rows() order

    SpatialParams spatial() const;
    TransitionSpec transition(TemporalMode mode) const;
};

/// Named, ordered parameter vector used for draws and their CSV form:
/// beta[k], phi or phi[s], sigma/alpha for each active family, sigma_0, y_mis[pid].
class ParamLayout {
public:
    ParamLayout(const ModelSpec& model, const Panel& panel);

    const std::vector<std::string>& names() const { return names_; }
    Eigen::Index size() const { return static_cast<Eigen::Index>(names_.size()); }
    Eigen::Index index_of(const std::string& name) const;

    Vector pack(const ParamState& state) const;
    ParamState unpack(const Vector& values) const;

private:
    ModelSpec model_;
    Eigen::Index p_ = 0, n_phi_ = 0, n_missing_ = 0;
    std::vector<std::string> names_;
};

struct SamplerConfig {
    int iter = 3000;
    int warmup = 1500;
    int chains = 3;
    int thin = 1;
    std::uint64_t seed = 1;
    double target_accept = 0.0;  ///< 0 selects 0.44 for scalar blocks, 0.234 otherwise
    int adapt_window = 100;      ///< warmup iterations before the empirical covariance is used
    bool adapt = true;
    double initial_scale = 0.1;  ///< proposal sd in transformed space before adaptation
    bool prior_only = false;     ///< drop the likelihood (prior predictive checks)
    int refresh = 0;             ///< progress message every `refresh` iterations; 0 disables
    int threads = 1;
    std::function<void(const std::string&)> progress;

    void validate() const;
};

struct PosteriorDraws {
    std::vector<std::string> names;
    std::vector<int> chain;      ///< per row, 1-based
    std::vector<int> iteration;  ///< per row, 1-based post-warmup index
    Matrix values;               ///< rows x names
    Vector lp;                   ///< log prior + log likelihood per row
    std::vector<std::string> block_names;
    std::vector<std::vector<double>> acceptance;  ///< per chain, per block (post-warmup)

    Eigen::Index size() const { return values.rows(); }
    int n_chains() const;
    Eigen::Index column(const std::string& name) const;
    /// Draws of one parameter split by chain.
    std::vector<std::vector<double>> by_chain(Eigen::Index column) const;
};

void write_draws(std::ostream& out, const PosteriorDraws& draws);
PosteriorDraws read_draws(std::istream& in, const std::string& source = "<draws>");
PosteriorDraws read_draws_file(const std::string& path);

double log_prior(const ParamState& state, const PriorSpec& prior, const ModelSpec& model);

/// Response vector with imputed values substituted for missing entries.
Vector completed_response(const Panel& panel, const ParamState& state);

/// Conditional VAR(1) log-likelihood with a stationary start. Returns -inf when
/// the innovation covariance is not positive definite.
double log_likelihood(const Panel& panel, const ParamState& state, const ModelSpec& model,
                      const DistanceBundle& bundle);

/// Draws the missing responses from their Gaussian full conditional.
Vector impute_missing(const Panel& panel, const ParamState& state, const ModelSpec& model,
                      const DistanceBundle& bundle, Rng& rng);

/// Deterministic starting point: OLS beta, residual variance split across
/// components, phi = 0, ranges at 10% of the prior bound.
ParamState initial_state(const Panel& panel, const ModelSpec& model, const PriorSpec& prior);

/// Adaptive random-walk Metropolis within Gibbs.
PosteriorDraws fit(const Panel& panel, const ModelSpec& model, const DistanceBundle& bundle, const PriorSpec& prior,
                   const SamplerConfig& config);

struct ParamSummary {
    std::string name;
    double mean = 0.0, sd = 0.0, q025 = 0.0, q50 = 0.0, q975 = 0.0;
    double rhat = 0.0, ess = 0.0;
};

std::vector<ParamSummary> summarize_draws(const PosteriorDraws& draws);
void write_summary(std::ostream& out, const std::vector<ParamSummary>& summary);

}  // namespace streamst
