#include "streamst/prediction.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <tuple>
#include <numeric>
#include <ostream>
#include <set>

#include "streamst/covariance.hpp"
#include "streamst/csv.hpp"
#include "streamst/error.hpp"
#include "streamst/random.hpp"
#include "streamst/stats.hpp"

namespace streamst {

namespace {

std::vector<Eigen::Index> select_draws(Eigen::Index available, int nsamples, std::uint64_t seed) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(available));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (nsamples == available) return idx;
    Rng rng = make_rng(seed, Stream::Prediction);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(nsamples));
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// Column positions of the requested prediction locations within the pred panel.
std::vector<Eigen::Index> requested_columns(const Panel& pred, const std::vector<int>& wanted) {
    std::vector<Eigen::Index> cols;
    if (wanted.empty()) {
        cols.resize(static_cast<std::size_t>(pred.S));
        std::iota(cols.begin(), cols.end(), Eigen::Index{0});
        return cols;
    }
    const std::set<int> want(wanted.begin(), wanted.end());
    for (Eigen::Index s = 0; s < pred.S; ++s)
        if (want.count(pred.locIDs[static_cast<std::size_t>(s)])) cols.push_back(s);
    if (cols.size() != want.size()) throw input_error("locID_pred lists locations absent from the prediction data");
    return cols;
}

Matrix select_cols(const Matrix& M, const std::vector<Eigen::Index>& cols) {
    Matrix out(M.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = M.col(cols[k]);
    return out;
}

DistanceBundle select_bundle_cols(const DistanceBundle& b, const std::vector<Eigen::Index>& cols) {
    DistanceBundle out;
    out.D = select_cols(b.D, cols);
    out.D_col = select_cols(b.D_col, cols);
    out.H = select_cols(b.H, cols);
    out.E = select_cols(b.E, cols);
    out.flow_con = select_cols(b.flow_con, cols);
    out.W = select_cols(b.W, cols);
    out.same_sites = false;
    return out;
}

}  // namespace

void PredictionRequest::validate() const {
    if (nsamples < 1) throw config_error("nsamples must be at least 1");
    if (chunk_size < 1) throw config_error("chunk_size must be at least 1");
}

PredictionDraws krige_predict(const PosteriorDraws& draws, const PredictionInputs& in,
                              const PredictionRequest& request) {
    request.validate();
    const Panel& obs = in.obs;
    const Panel& pred = in.pred;
    if (request.nsamples > draws.size())
        throw config_error("nsamples (" + std::to_string(request.nsamples) + ") exceeds the " +
                           std::to_string(draws.size()) + " kept posterior draws");
    if (pred.T != obs.T || pred.times != obs.times)
        throw input_error("prediction data must cover the observed time points");
    if (pred.X.cols() != obs.X.cols()) throw input_error("prediction covariates do not match the observation design");
    if (in.obs_bundle.rows() != obs.S || in.cross_bundle.rows() != obs.S || in.cross_bundle.cols() != pred.S)
        throw config_error("distance bundles do not match the observation and prediction sites");

    const ParamLayout layout(in.model, obs);
    if (layout.names() != draws.names) throw input_error("posterior draws do not match the model and observation data");

    const auto cols = requested_columns(pred, request.locID_pred);
    const auto P = static_cast<Eigen::Index>(cols.size());
    const Eigen::Index T = obs.T;
    const DistanceBundle cross = select_bundle_cols(in.cross_bundle, cols);
    Matrix Xp(P * T, pred.X.cols());
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index k = 0; k < P; ++k) Xp.row(t * P + k) = pred.X.row(pred.index(cols[static_cast<std::size_t>(k)], t));

    // VAR mode: each prediction site takes phi from its nearest observed site.
    std::vector<Eigen::Index> nearest(static_cast<std::size_t>(P), 0);
    if (in.model.mode == TemporalMode::VAR)
        for (Eigen::Index k = 0; k < P; ++k) cross.H.col(k).minCoeff(&nearest[static_cast<std::size_t>(k)]);

    const auto chosen = select_draws(draws.size(), request.nsamples, request.seed);
    PredictionDraws out;
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index k = 0; k < P; ++k) {
            out.locIDs.push_back(pred.locIDs[static_cast<std::size_t>(cols[static_cast<std::size_t>(k)])]);
            out.times.push_back(pred.times[static_cast<std::size_t>(t)]);
        }
    out.values.resize(P * T, static_cast<Eigen::Index>(chosen.size()));

    for (std::size_t d = 0; d < chosen.size(); ++d) {
        const Eigen::Index row = chosen[d];
        const ParamState state = layout.unpack(draws.values.row(row).transpose());
        const SpatialParams sp = state.spatial();
        const Vector phi_obs = transition_diagonal(state.transition(in.model.mode), obs.S);
        Vector phi_pred(P);
        for (Eigen::Index k = 0; k < P; ++k) phi_pred(k) = phi_obs(nearest[static_cast<std::size_t>(k)]);

        const Matrix Q = mixture_cov(in.model.kernels, sp, in.obs_bundle, true);
        const Vector resid = completed_response(obs, state) - obs.X * state.beta;
        const bool kron = in.model.mode == TemporalMode::AR && !request.force_dense;

        // Weights C_OO^{-1}(y_O - X_O beta), shared by all chunks of this draw.
        Vector weights;
        Matrix sigma_var;
        if (kron) {
            sigma_var = temporal_cov(phi_obs(0), T);
            weights = KronInverse(Q, sigma_var).apply(resid);
        } else {
            const Matrix C_oo = spacetime_cross_cov(phi_obs, phi_obs, Q, T);
            Eigen::LLT<Matrix> llt(C_oo);
            if (llt.info() != Eigen::Success) throw numeric_error("observation covariance is singular");
            weights = llt.solve(resid);
        }

        Vector mean(P * T);
        for (Eigen::Index c0 = 0; c0 < P; c0 += request.chunk_size) {
            const Eigen::Index width = std::min<Eigen::Index>(request.chunk_size, P - c0);
            std::vector<Eigen::Index> chunk(static_cast<std::size_t>(width));
            std::iota(chunk.begin(), chunk.end(), c0);
            const Matrix C_sp = mixture_cov(in.model.kernels, sp, select_bundle_cols(cross, chunk), false);
            Vector krig;
            if (kron) {
                krig = kron_apply(sigma_var, C_sp.transpose(), weights);
            } else {
                const Matrix C_op = spacetime_cross_cov(phi_obs, phi_pred.segment(c0, width), C_sp, T);
                krig = C_op.transpose() * weights;
            }
            for (Eigen::Index t = 0; t < T; ++t)
                for (Eigen::Index k = 0; k < width; ++k) {
                    const Eigen::Index cell = t * P + c0 + k;
                    mean(cell) = Xp.row(cell).dot(state.beta) + krig(t * width + k);
                }
        }
        if (request.add_noise) {
            Rng rng = make_rng(request.seed, Stream::Prediction, static_cast<std::uint64_t>(row) + 1);
            mean += state.sigma_0 * standard_normal(rng, P * T);
        }
        out.values.col(static_cast<Eigen::Index>(d)) = mean;
        out.draw_index.push_back(static_cast<int>(row) + 1);
        out.draw_chain.push_back(draws.chain[static_cast<std::size_t>(row)]);
    }
    return out;
}

PredictionDraws imputed_draws(const PosteriorDraws& draws, const Panel& obs) {
    PredictionDraws out;
    const auto rows = obs.missing_rows();
    out.values.resize(static_cast<Eigen::Index>(rows.size()), draws.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const Eigen::Index r = rows[k];
        out.locIDs.push_back(obs.locIDs[static_cast<std::size_t>(r % obs.S)]);
        out.times.push_back(obs.times[static_cast<std::size_t>(r / obs.S)]);
        const Eigen::Index col = draws.column("y_mis[" + std::to_string(obs.pid[static_cast<std::size_t>(r)]) + "]");
        out.values.row(static_cast<Eigen::Index>(k)) = draws.values.col(col).transpose();
    }
    for (Eigen::Index d = 0; d < draws.size(); ++d) {
        out.draw_index.push_back(static_cast<int>(d) + 1);
        out.draw_chain.push_back(draws.chain[static_cast<std::size_t>(d)]);
    }
    return out;
}

std::vector<CellSummary> summarize_predictions(const PredictionDraws& pred) {
    if (pred.draws() == 0) throw input_error("no prediction draws to summarize");
    std::vector<CellSummary> out;
    for (Eigen::Index c = 0; c < pred.cells(); ++c) {
        std::vector<double> v(static_cast<std::size_t>(pred.draws()));
        for (Eigen::Index d = 0; d < pred.draws(); ++d) v[static_cast<std::size_t>(d)] = pred.values(c, d);
        CellSummary s;
        s.locID = pred.locIDs[static_cast<std::size_t>(c)];
        s.time = pred.times[static_cast<std::size_t>(c)];
        s.mean = stats::mean(v);
        s.sd = stats::sd(v);
        std::sort(v.begin(), v.end());
        s.q025 = stats::quantile_sorted(v, 0.025);
        s.q50 = stats::quantile_sorted(v, 0.5);
        s.q975 = stats::quantile_sorted(v, 0.975);
        out.push_back(s);
    }
    return out;
}

void write_prediction_draws(std::ostream& out, const PredictionDraws& pred) {
    csv::write_row(out, {"locID", "time", "draw", "value"});
    for (Eigen::Index d = 0; d < pred.draws(); ++d)
        for (Eigen::Index c = 0; c < pred.cells(); ++c)
            csv::write_row(out, {std::to_string(pred.locIDs[static_cast<std::size_t>(c)]),
                                 std::to_string(pred.times[static_cast<std::size_t>(c)]),
                                 std::to_string(pred.draw_index[static_cast<std::size_t>(d)]),
                                 csv::format(pred.values(c, d))});
}

PredictionDraws read_prediction_draws(std::istream& in, const std::string& source) {
    const auto table = csv::read(in, source);
    const auto c_loc = table.column("locID"), c_time = table.column("time"), c_draw = table.column("draw"),
               c_val = table.column("value");
    std::map<std::pair<int, int>, Eigen::Index> cell_pos;   // (time, locID) insertion order kept separately
    std::vector<std::pair<int, int>> cells;
    std::map<int, Eigen::Index> draw_pos;
    std::vector<std::tuple<Eigen::Index, int, double>> entries;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + " row " + std::to_string(r + 1);
        const int loc = csv::to_int(row[c_loc], ctx), time = csv::to_int(row[c_time], ctx);
        const int draw = csv::to_int(row[c_draw], ctx);
        auto [it, fresh] = cell_pos.emplace(std::make_pair(time, loc), static_cast<Eigen::Index>(cells.size()));
        if (fresh) cells.emplace_back(loc, time);
        draw_pos.emplace(draw, 0);
        entries.emplace_back(it->second, draw, csv::to_double(row[c_val], ctx));
    }
    PredictionDraws out;
    Eigen::Index next = 0;
    for (auto& [draw, pos] : draw_pos) {
        pos = next++;
        out.draw_index.push_back(draw);
        out.draw_chain.push_back(0);
    }
    for (const auto& [loc, time] : cells) {
        out.locIDs.push_back(loc);
        out.times.push_back(time);
    }
    out.values = Matrix::Constant(static_cast<Eigen::Index>(cells.size()), next, std::numeric_limits<double>::quiet_NaN());
    for (const auto& [cell, draw, value] : entries) out.values(cell, draw_pos.at(draw)) = value;
    if (out.values.hasNaN()) throw input_error(source + ": prediction grid is incomplete");
    return out;
}

PredictionDraws read_prediction_draws_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return read_prediction_draws(in, path);
}

void write_prediction_summary(std::ostream& out, const std::vector<CellSummary>& summary) {
    csv::write_row(out, {"locID", "time", "mean", "sd", "q2.5", "q50", "q97.5"});
    for (const auto& s : summary)
        csv::write_row(out, {std::to_string(s.locID), std::to_string(s.time), csv::format(s.mean), csv::format(s.sd),
                             csv::format(s.q025), csv::format(s.q50), csv::format(s.q975)});
}

}  // namespace streamst
