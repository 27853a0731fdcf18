#include "streamst/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "streamst/error.hpp"

namespace streamst::stats {

double mean(std::span<const double> x) {
    if (x.empty()) throw input_error("mean of empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sd(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double quantile_sorted(std::span<const double> sorted, double prob) {
    if (sorted.empty()) throw input_error("quantile of empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw config_error("quantile probability outside [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::span<const double> x, double prob) {
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    return quantile_sorted(sorted, prob);
}

namespace {

std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        if (half == 0) continue;
        out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    if (out.empty()) throw input_error("need at least two draws per chain for convergence diagnostics");
    const std::size_t n = out.front().size();
    for (const auto& c : out)
        if (c.size() != n) throw input_error("chains must have equal length");
    return out;
}

struct Variance {
    double within = 0.0;
    double plus = 0.0;
};

Variance variance_components(const std::vector<std::vector<double>>& split) {
    const double m = static_cast<double>(split.size());
    const double n = static_cast<double>(split.front().size());
    std::vector<double> means, vars;
    for (const auto& c : split) {
        means.push_back(mean(c));
        const double s = sd(c);
        vars.push_back(s * s);
    }
    const double grand = mean(means);
    double between = 0.0;
    for (double mu : means) between += (mu - grand) * (mu - grand);
    between *= n / std::max(m - 1.0, 1.0);
    Variance v;
    v.within = mean(vars);
    v.plus = (n - 1.0) / n * v.within + between / n;
    return v;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
    const auto split = split_chains(chains);
    const auto v = variance_components(split);
    if (v.within <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::sqrt(v.plus / v.within);
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
    const auto split = split_chains(chains);
    const auto v = variance_components(split);
    const std::size_t m = split.size();
    const std::size_t n = split.front().size();
    const double total = static_cast<double>(m * n);
    if (v.within <= 0.0) return std::numeric_limits<double>::quiet_NaN();

    std::vector<double> means;
    for (const auto& c : split) means.push_back(mean(c));
    // Mean over chains of the biased autocovariance at one lag.
    auto acov = [&](std::size_t lag) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const auto& c = split[j];
            double s = 0.0;
            for (std::size_t i = 0; i + lag < n; ++i) s += (c[i] - means[j]) * (c[i + lag] - means[j]);
            acc += s / static_cast<double>(n);
        }
        return acc / static_cast<double>(m);
    };
    auto rho = [&](std::size_t lag) { return 1.0 - (v.within - acov(lag)) / v.plus; };

    // Geyer: sum positive, monotone pair sums.
    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = (k == 0 ? 1.0 : rho(2 * k)) + rho(2 * k + 1);
        if (pair < 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
    }
    tau = std::max(tau, 1.0 / std::log10(total));
    return total / tau;
}

double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

double ks_pvalue(double statistic, std::size_t n) {
    if (n == 0) throw input_error("KS test with no samples");
    const double rn = std::sqrt(static_cast<double>(n));
    const double lambda = (rn + 0.12 + 0.11 / rn) * statistic;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace streamst::stats
