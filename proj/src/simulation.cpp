#include "streamst/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "streamst/error.hpp"
#include "streamst/random.hpp"

namespace streamst {

void SimulationSpec::validate() const {
    if (beta.size() < 1) throw config_error("simulation needs at least an intercept coefficient");
    if (T < 1) throw config_error("simulation needs T >= 1");
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw config_error("missing_rate must lie in [0, 1)");
    if (!(extra_noise_sd >= 0.0)) throw config_error("extra_noise_sd must be non-negative");
    if (params.sigma2_0 < 0.0) throw config_error("nugget must be non-negative");
    validate_kernels(kernels);
}

SimulatedData simulate_panel(const StreamNetwork& net, const SiteSet& obs_sites, const SiteSet& pred_sites,
                             const SimulationSpec& spec) {
    spec.validate();
    SiteSet all = obs_sites;
    all.insert(all.end(), pred_sites.begin(), pred_sites.end());
    const auto S = static_cast<Eigen::Index>(all.size());
    const auto S_obs = static_cast<Eigen::Index>(obs_sites.size());
    const auto S_pred = S - S_obs;
    const Eigen::Index T = spec.T;
    const Eigen::Index p = spec.beta.size();
    if (S_obs == 0) throw config_error("simulation needs at least one observation site");

    const auto bundle = build_distance_bundle(net, all);
    const Matrix Sigma = spec.kernels.empty() ? Matrix::Zero(S, S) : mixture_cov(spec.kernels, spec.params, bundle, false);
    const Matrix Q = innovation_cov(Sigma, spec.params.sigma2_0);
    const Vector phi = transition_diagonal(spec.transition, S);
    const Matrix V = stationary_cov(phi.asDiagonal().toDenseMatrix(), Q);

    // Semidefinite factors: zero-variance components are allowed here.
    auto factor = [](const Matrix& M) -> Matrix {
        Eigen::LDLT<Matrix> ldlt(M);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -1e-10 * std::max(1.0, M.diagonal().maxCoeff())).any())
            throw numeric_error("simulation covariance is not positive semidefinite");
        const Vector d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
        Matrix L = ldlt.matrixL();
        return ldlt.transpositionsP().transpose() * (L * d.asDiagonal());
    };
    const Matrix L_v = factor(V);
    const Matrix L_q = factor(Q);

    Rng cov_rng = make_rng(spec.seed, Stream::Simulation, 0);
    Rng err_rng = make_rng(spec.seed, Stream::Simulation, 1);
    Rng noise_rng = make_rng(spec.seed, Stream::Simulation, 2);
    Rng mask_rng = make_rng(spec.seed, Stream::Masking);

    // Covariates are site attributes held fixed over time, as when a site table is replicated per date.
    const Matrix site_cov = p > 1 ? Matrix(standard_normal(cov_rng, S * (p - 1)).reshaped(S, p - 1)) : Matrix(S, 0);

    Matrix E(S, T);
    E.col(0) = L_v * standard_normal(err_rng, S);
    for (Eigen::Index t = 1; t < T; ++t) E.col(t) = phi.asDiagonal() * E.col(t - 1) + L_q * standard_normal(err_rng, S);

    auto make_panel = [&](Eigen::Index first, Eigen::Index count, int pid_offset) {
        Panel panel;
        panel.S = count;
        panel.T = T;
        for (Eigen::Index s = 0; s < count; ++s) panel.locIDs.push_back(all[static_cast<std::size_t>(first + s)].locID);
        for (Eigen::Index t = 0; t < T; ++t) panel.times.push_back(spec.first_time + static_cast<int>(t));
        for (Eigen::Index k = 1; k < p; ++k) panel.covariate_names.push_back("X" + std::to_string(k));
        panel.X.resize(count * T, p);
        panel.y = Vector::Constant(count * T, std::numeric_limits<double>::quiet_NaN());
        panel.missing.assign(static_cast<std::size_t>(count * T), false);
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index s = 0; s < count; ++s) {
                const Eigen::Index r = panel.index(s, t);
                panel.X(r, 0) = 1.0;
                if (p > 1) panel.X.row(r).tail(p - 1) = site_cov.row(first + s);
                panel.pid.push_back(pid_offset + static_cast<int>(r) + 1);
            }
        return panel;
    };

    SimulatedData out;
    out.obs = make_panel(0, S_obs, 0);
    out.pred = make_panel(S_obs, S_pred, static_cast<int>(S_obs * T));

    std::normal_distribution<double> noise(0.0, 1.0);
    auto fill_truth = [&](const Panel& panel, Eigen::Index first) {
        Vector truth(panel.rows());
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index s = 0; s < panel.S; ++s) {
                const Eigen::Index r = panel.index(s, t);
                truth(r) = panel.X.row(r).dot(spec.beta) + E(first + s, t) + spec.extra_noise_sd * noise(noise_rng);
            }
        return truth;
    };
    out.obs_truth = fill_truth(out.obs, 0);
    out.pred_truth = fill_truth(out.pred, S_obs);
    out.obs.y = out.obs_truth;
    out.pred.missing.assign(static_cast<std::size_t>(out.pred.rows()), true);

    const auto n_mask = static_cast<Eigen::Index>(std::lround(static_cast<double>(S_obs) * spec.missing_rate));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(S_obs));
    for (Eigen::Index t = 0; t < T && n_mask > 0; ++t) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::shuffle(order.begin(), order.end(), mask_rng);
        for (Eigen::Index k = 0; k < n_mask; ++k) {
            const Eigen::Index r = out.obs.index(order[static_cast<std::size_t>(k)], t);
            out.obs.missing[static_cast<std::size_t>(r)] = true;
            out.obs.y(r) = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

}  // namespace streamst
