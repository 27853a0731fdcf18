#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "streamst/covariance.hpp"
#include "streamst/network.hpp"
#include "streamst/random.hpp"
#include "streamst/spacetime.hpp"

namespace fixtures {

using namespace streamst;

// Outlet segment 1 (length 2) fed by headwaters 2 (length 3, afv 0.4) and 3 (length 4, afv 0.6).
// s1 sits 2 above the junction on segment 2, s2 3 above it on segment 3, s3 1 below it.
inline StreamNetwork y_network() {
    return StreamNetwork({{1, kOutlet, 2.0, 1.0}, {2, 1, 3.0, 0.4}, {3, 1, 4.0, 0.6}});
}

inline SiteSet y_sites() {
    return {{1, 2, 4.0, -1.0, 3.0}, {2, 3, 5.0, 1.0, 4.0}, {3, 1, 1.0, 0.0, 1.0}};
}

// Plain multivariate normal log-density through a dense LDLT, independent of the library's factorization.
inline double mvn_logpdf(const Vector& x, const Vector& mean, const Matrix& cov) {
    const Eigen::LDLT<Matrix> ldlt(cov);
    const Vector r = x - mean;
    const double quad = r.dot(ldlt.solve(r));
    const double logdet = ldlt.vectorD().array().log().sum();
    return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + logdet + quad);
}

inline Matrix random_spd(Rng& rng, Eigen::Index n, double ridge = 0.5) {
    std::normal_distribution<double> normal;
    Matrix A(n, n);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = normal(rng);
    return A * A.transpose() / static_cast<double>(n) + ridge * Matrix::Identity(n, n);
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Small random network with its observation sites, for property checks.
inline GeneratedNetwork random_network(std::uint64_t seed, int n_segments = 12, double spacing = 1.0) {
    return generate_network({n_segments, seed, spacing, spacing * 2.3});
}

}  // namespace fixtures

namespace fixtures {

// Complete panel over sites 1..S with time points 1..T; NaN entries of y are missing.
inline streamst::Panel make_panel(const streamst::Matrix& X, const streamst::Vector& y, Eigen::Index S) {
    streamst::Panel p;
    p.S = S;
    p.T = y.size() / S;
    for (Eigen::Index s = 0; s < S; ++s) p.locIDs.push_back(static_cast<int>(s) + 1);
    for (Eigen::Index t = 0; t < p.T; ++t) p.times.push_back(static_cast<int>(t) + 1);
    for (Eigen::Index r = 0; r < y.size(); ++r) {
        p.pid.push_back(static_cast<int>(r) + 1);
        p.missing.push_back(std::isnan(y(r)));
    }
    for (Eigen::Index k = 1; k < X.cols(); ++k) p.covariate_names.push_back("X" + std::to_string(k));
    p.X = X;
    p.y = y;
    return p;
}

// Random design with an intercept column.
inline streamst::Matrix random_design(streamst::Rng& rng, Eigen::Index rows, Eigen::Index p) {
    streamst::Matrix X(rows, p);
    X.col(0).setOnes();
    if (p > 1) X.rightCols(p - 1) = streamst::standard_normal(rng, rows * (p - 1)).reshaped(rows, p - 1);
    return X;
}

}  // namespace fixtures
