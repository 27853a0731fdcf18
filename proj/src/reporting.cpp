#include "streamst/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "streamst/csv.hpp"
#include "streamst/error.hpp"
#include "streamst/stats.hpp"

namespace streamst {

std::vector<ExceedanceRow> exceedance_prob(const PredictionDraws& pred, double threshold) {
    if (pred.draws() == 0) throw input_error("no prediction draws");
    std::vector<ExceedanceRow> out;
    out.reserve(static_cast<std::size_t>(pred.cells()));
    for (Eigen::Index c = 0; c < pred.cells(); ++c) {
        const auto above = (pred.values.row(c).array() > threshold).count();
        out.push_back({pred.locIDs[static_cast<std::size_t>(c)], pred.times[static_cast<std::size_t>(c)], threshold,
                       static_cast<double>(above) / static_cast<double>(pred.draws())});
    }
    return out;
}

void write_exceedance(std::ostream& out, const std::vector<ExceedanceRow>& rows) {
    csv::write_row(out, {"locID", "time", "threshold", "prob"});
    for (const auto& r : rows)
        csv::write_row(out, {std::to_string(r.locID), std::to_string(r.time), csv::format(r.threshold),
                             csv::format(r.prob)});
}

double rmspe(std::span<const double> predicted, std::span<const double> truth) {
    if (predicted.size() != truth.size()) throw input_error("rmspe: length mismatch");
    if (truth.empty()) throw input_error("rmspe: no values");
    double ss = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (std::isnan(truth[i])) throw input_error("rmspe: missing truth value");
        ss += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
    }
    return std::sqrt(ss / static_cast<double>(truth.size()));
}

double interval_coverage(const PredictionDraws& pred, std::span<const double> truth, double level) {
    if (!(level > 0.0 && level <= 1.0)) throw config_error("coverage level must lie in (0, 1]");
    if (static_cast<Eigen::Index>(truth.size()) != pred.cells()) throw input_error("coverage: length mismatch");
    if (truth.empty() || pred.draws() == 0) throw input_error("coverage: no values");
    const double tail = 0.5 * (1.0 - level);
    std::size_t inside = 0;
    std::vector<double> v(static_cast<std::size_t>(pred.draws()));
    for (Eigen::Index c = 0; c < pred.cells(); ++c) {
        for (Eigen::Index d = 0; d < pred.draws(); ++d) v[static_cast<std::size_t>(d)] = pred.values(c, d);
        std::sort(v.begin(), v.end());
        const double lo = stats::quantile_sorted(v, tail);
        const double hi = stats::quantile_sorted(v, 1.0 - tail);
        const double y = truth[static_cast<std::size_t>(c)];
        if (y >= lo && y <= hi) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

}  // namespace streamst
