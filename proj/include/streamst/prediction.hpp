#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "streamst/inference.hpp"
#include "streamst/network.hpp"
#include "streamst/spacetime.hpp"

namespace streamst {

struct PredictionRequest {
    int nsamples = 100;
    int chunk_size = 50;
    std::vector<int> locID_pred;  ///< empty = every prediction location
    std::uint64_t seed = 1;
    bool add_noise = true;   ///< add N(0, sigma_0^2) so outputs are posterior-predictive draws
    bool force_dense = false;  ///< skip the Kronecker path in AR mode

    void validate() const;
};

/// Draw matrix over a (location, time) grid. Cells are time-major.
struct PredictionDraws {
    std::vector<int> locIDs;  ///< per cell
    std::vector<int> times;   ///< per cell
    Matrix values;            ///< cells x draws
    std::vector<int> draw_index;  ///< per draw column: 1-based row in the posterior draws
    std::vector<int> draw_chain;  ///< per draw column

    Eigen::Index cells() const { return values.rows(); }
    Eigen::Index draws() const { return values.cols(); }
};

struct PredictionInputs {
    const Panel& obs;
    const Panel& pred;
    const DistanceBundle& obs_bundle;   ///< obs x obs
    const DistanceBundle& cross_bundle;  ///< obs x pred
    const ModelSpec& model;
};

/// Simple kriging from each selected posterior draw. Imputed responses fill
/// the observed vector; VAR-mode prediction sites borrow phi from the nearest
/// observed site in hydrologic distance.
PredictionDraws krige_predict(const PosteriorDraws& draws, const PredictionInputs& inputs,
                              const PredictionRequest& request);

/// Posterior-predictive draws of the missing responses already stored in a fit.
PredictionDraws imputed_draws(const PosteriorDraws& draws, const Panel& obs);

struct CellSummary {
    int locID = 0;
    int time = 0;
    double mean = 0.0, sd = 0.0, q025 = 0.0, q50 = 0.0, q975 = 0.0;
};

std::vector<CellSummary> summarize_predictions(const PredictionDraws& pred);

void write_prediction_draws(std::ostream& out, const PredictionDraws& pred);
PredictionDraws read_prediction_draws(std::istream& in, const std::string& source = "<predictions>");
PredictionDraws read_prediction_draws_file(const std::string& path);
void write_prediction_summary(std::ostream& out, const std::vector<CellSummary>& summary);

}  // namespace streamst
