#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "streamst/prediction.hpp"

namespace streamst {

struct ExceedanceRow {
    int locID = 0;
    int time = 0;
    double threshold = 0.0;
    double prob = 0.0;
};

/// Fraction of draws strictly above `threshold`, per (location, time) cell.
std::vector<ExceedanceRow> exceedance_prob(const PredictionDraws& pred, double threshold);
void write_exceedance(std::ostream& out, const std::vector<ExceedanceRow>& rows);

double rmspe(std::span<const double> predicted, std::span<const double> truth);

/// Fraction of truths inside the central equal-tailed `level` interval of each cell's draws.
double interval_coverage(const PredictionDraws& pred, std::span<const double> truth, double level);

}  // namespace streamst
