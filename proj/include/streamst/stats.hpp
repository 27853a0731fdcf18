#pragma once

#include <span>
#include <vector>

namespace streamst::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sd(std::span<const double> x);
/// Linear-interpolation quantile (R type 7) of unsorted data.
double quantile(std::span<const double> x, double prob);
/// Same, for data already sorted ascending.
double quantile_sorted(std::span<const double> sorted, double prob);

/// Split potential scale reduction over chains of equal length. NaN when every
/// draw is identical.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Effective sample size from split chains with Geyer's initial monotone sequence.
double effective_sample_size(const std::vector<std::vector<double>>& chains);

double normal_cdf(double x, double mean = 0.0, double sd = 1.0);

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf cdf);
/// Asymptotic p-value for the KS statistic with n samples.
double ks_pvalue(double statistic, std::size_t n);

}  // namespace streamst::stats

#include <algorithm>
#include <cmath>

namespace streamst::stats {

template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

}  // namespace streamst::stats
