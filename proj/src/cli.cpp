#include "streamst/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "streamst/csv.hpp"
#include "streamst/error.hpp"
#include "streamst/network.hpp"
#include "streamst/reporting.hpp"

namespace streamst::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

const std::set<std::string> kKnownKeys{
    "response", "covariates", "intercept", "kernels", "time_method", "iter", "warmup", "chains", "thin", "seed",
    "threads", "refresh", "target_accept", "adapt_window", "initial_scale", "prior_only", "sd_upper", "beta_var",
    "range_upper", "nsamples", "chunk_size", "locID_pred", "add_noise", "threshold", "level", "beta", "sigma2_u",
    "alpha_u", "sigma2_d", "alpha_d", "sigma2_e", "alpha_e", "sigma2_0", "phi", "extra_noise_sd", "T", "first_time",
    "missing_rate", "n_segments", "obs_spacing", "pred_spacing"};

class Reader {
public:
    explicit Reader(const KeyValues& kv) : kv_(kv) {
        for (const auto& [k, v] : kv)
            if (!kKnownKeys.count(k)) throw config_error("unknown configuration key '" + k + "'");
    }

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    void get(const std::string& key, std::string& out) const {
        if (has(key)) out = kv_.at(key);
    }
    void get(const std::string& key, double& out) const {
        if (has(key)) out = number(key);
    }
    void get(const std::string& key, int& out) const {
        if (!has(key)) return;
        const double v = number(key);
        if (v != std::floor(v)) throw config_error("'" + key + "' must be an integer");
        out = static_cast<int>(v);
    }
    void get(const std::string& key, std::uint64_t& out) const {
        if (!has(key)) return;
        const double v = number(key);
        if (v < 0 || v != std::floor(v)) throw config_error("'" + key + "' must be a non-negative integer");
        out = static_cast<std::uint64_t>(v);
    }
    void get(const std::string& key, bool& out) const {
        if (!has(key)) return;
        const auto& v = kv_.at(key);
        if (v == "true" || v == "1" || v == "yes") out = true;
        else if (v == "false" || v == "0" || v == "no") out = false;
        else throw config_error("'" + key + "' must be true or false");
    }
    std::vector<double> numbers(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split_list(kv_.at(key))) out.push_back(parse(key, item));
        return out;
    }

private:
    double number(const std::string& key) const { return parse(key, kv_.at(key)); }
    static double parse(const std::string& key, const std::string& text) {
        try {
            return csv::to_double(text, key);
        } catch (const Error&) {
            throw config_error("'" + key + "' expects a number, got '" + text + "'");
        }
    }
    const KeyValues& kv_;
};

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory '" + dir + "': " + ec.message());
}

template <class Fn>
void write_file(const std::string& path, Fn&& fn) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write '" + path + "'");
    fn(out);
    if (!out) throw io_error("failed writing '" + path + "'");
}

std::string require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw config_error(flag + " is required");
    return value;
}

void write_matrix(std::ostream& out, const Matrix& M, const SiteSet& rows, const SiteSet& cols) {
    std::vector<std::string> header{"locID"};
    for (const auto& s : cols) header.push_back(std::to_string(s.locID));
    csv::write_row(out, header);
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        std::vector<std::string> cells{std::to_string(rows[static_cast<std::size_t>(i)].locID)};
        for (Eigen::Index j = 0; j < M.cols(); ++j) cells.push_back(csv::format(M(i, j)));
        csv::write_row(out, cells);
    }
}

void write_truth(std::ostream& out, const Panel& panel, const Vector& truth, const std::string& response) {
    csv::write_row(out, {"locID", "pid", "time", response});
    for (Eigen::Index t = 0; t < panel.T; ++t)
        for (Eigen::Index s = 0; s < panel.S; ++s) {
            const Eigen::Index r = panel.index(s, t);
            csv::write_row(out, {std::to_string(panel.locIDs[static_cast<std::size_t>(s)]),
                                 std::to_string(panel.pid[static_cast<std::size_t>(r)]),
                                 std::to_string(panel.times[static_cast<std::size_t>(t)]), csv::format(truth(r))});
        }
}

struct Paths {
    std::string network, sites, pred_sites, obs, preds, draws, predictions, truth, config, out_dir = ".";
    std::string in_out(const std::string& given, const std::string& name) const {
        return given.empty() ? (fs::path(out_dir) / name).string() : given;
    }
    std::string out(const std::string& name) const { return (fs::path(out_dir) / name).string(); }
};

PriorSpec resolve_prior(const RunConfig& cfg, const StreamNetwork& net, const SiteSet& sites) {
    PriorSpec prior = PriorSpec::for_sites(net, sites);
    prior.sd_upper = cfg.prior_overrides.sd_upper;
    prior.beta_var = cfg.prior_overrides.beta_var;
    if (cfg.prior_overrides.range_upper > 0.0) prior.range_upper = cfg.prior_overrides.range_upper;
    return prior;
}

PanelColumns obs_columns(const RunConfig& cfg) { return {cfg.response, cfg.covariates, cfg.intercept}; }
PanelColumns pred_columns(const RunConfig& cfg) { return {std::nullopt, cfg.covariates, cfg.intercept}; }

void cmd_generate_network(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    auto opts = cfg.generator;
    opts.seed = cfg.seed;
    const auto gen = generate_network(opts);
    ensure_dir(paths.out_dir);
    write_file(paths.out("network.csv"), [&](std::ostream& o) { write_network(o, gen.network); });
    write_file(paths.out("obs_sites.csv"), [&](std::ostream& o) { write_sites(o, gen.obs); });
    write_file(paths.out("pred_sites.csv"), [&](std::ostream& o) { write_sites(o, gen.preds); });
    out << "network: " << gen.network.size() << " segments, " << gen.obs.size() << " observation sites, "
        << gen.preds.size() << " prediction sites\n";
}

void cmd_simulate(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const auto net = read_network_file(require(paths.network, "--network"));
    const auto obs_sites = read_sites_file(require(paths.sites, "--sites"), net);
    const SiteSet pred_sites = paths.pred_sites.empty() ? SiteSet{} : read_sites_file(paths.pred_sites, net);
    auto spec = cfg.simulation;
    spec.seed = cfg.seed;
    const auto sim = simulate_panel(net, obs_sites, pred_sites, spec);
    ensure_dir(paths.out_dir);
    write_file(paths.out("obs.csv"), [&](std::ostream& o) { write_panel(o, sim.obs, cfg.response, true); });
    write_file(paths.out("obs_truth.csv"), [&](std::ostream& o) { write_truth(o, sim.obs, sim.obs_truth, cfg.response); });
    if (!pred_sites.empty()) {
        write_file(paths.out("pred.csv"), [&](std::ostream& o) { write_panel(o, sim.pred, cfg.response, false); });
        write_file(paths.out("pred_truth.csv"),
                   [&](std::ostream& o) { write_truth(o, sim.pred, sim.pred_truth, cfg.response); });
    }
    out << "simulated " << sim.obs.S << " sites x " << sim.obs.T << " times\n";
}

void cmd_distances(const Paths& paths, std::ostream& out) {
    const auto net = read_network_file(require(paths.network, "--network"));
    const auto sites = read_sites_file(require(paths.sites, "--sites"), net);
    ensure_dir(paths.out_dir);
    const auto b = build_distance_bundle(net, sites);
    const std::pair<const char*, const Matrix*> square[] = {
        {"D.csv", &b.D}, {"H.csv", &b.H}, {"E.csv", &b.E}, {"flow_con.csv", &b.flow_con}, {"W.csv", &b.W}};
    for (const auto& [name, m] : square)
        write_file(paths.out(name), [&](std::ostream& o) { write_matrix(o, *m, sites, sites); });
    if (!paths.pred_sites.empty()) {
        const auto preds = read_sites_file(paths.pred_sites, net);
        const auto c = build_distance_bundle(net, sites, preds);
        const std::pair<const char*, const Matrix*> cross[] = {{"D_op.csv", &c.D},       {"D_po.csv", &c.D_col},
                                                               {"H_op.csv", &c.H},       {"E_op.csv", &c.E},
                                                               {"flow_con_op.csv", &c.flow_con}, {"W_op.csv", &c.W}};
        for (const auto& [name, m] : cross)
            write_file(paths.out(name), [&](std::ostream& o) { write_matrix(o, *m, sites, preds); });
    }
    for (const auto& w : net.warnings()) out << "warning: " << w << '\n';
    out << "distance matrices for " << sites.size() << " sites\n";
}

void cmd_fit(const RunConfig& cfg, const Paths& paths, std::ostream& out, std::ostream& err) {
    cfg.sampler.validate();
    const auto net = read_network_file(require(paths.network, "--network"));
    const auto sites = read_sites_file(require(paths.sites, "--sites"), net);
    const auto panel = read_panel_file(require(paths.obs, "--obs"), obs_columns(cfg), sites);
    const auto bundle = build_distance_bundle(net, sites);
    const auto prior = resolve_prior(cfg, net, sites);
    auto sampler = cfg.sampler;
    sampler.seed = cfg.seed;
    sampler.progress = [&err](const std::string& msg) { err << msg << '\n'; };
    const auto draws = fit(panel, cfg.model, bundle, prior, sampler);

    ensure_dir(paths.out_dir);
    write_file(paths.out("draws.csv"), [&](std::ostream& o) { write_draws(o, draws); });
    write_file(paths.out("summary.csv"), [&](std::ostream& o) { write_summary(o, summarize_draws(draws)); });
    write_file(paths.out("acceptance.csv"), [&](std::ostream& o) {
        csv::write_row(o, {"chain", "block", "rate"});
        for (std::size_t c = 0; c < draws.acceptance.size(); ++c)
            for (std::size_t b = 0; b < draws.block_names.size(); ++b)
                csv::write_row(o, {std::to_string(c + 1), draws.block_names[b], csv::format(draws.acceptance[c][b])});
    });
    if (!panel.missing_rows().empty())
        write_file(paths.out("imputed.csv"), [&](std::ostream& o) { write_prediction_draws(o, imputed_draws(draws, panel)); });
    out << "fit: " << draws.size() << " draws from " << draws.n_chains() << " chains\n";
}

void cmd_predict(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const auto net = read_network_file(require(paths.network, "--network"));
    const auto sites = read_sites_file(require(paths.sites, "--sites"), net);
    const auto pred_sites = read_sites_file(require(paths.pred_sites, "--pred-sites"), net);
    const auto obs = read_panel_file(require(paths.obs, "--obs"), obs_columns(cfg), sites);
    const auto pred = read_panel_file(require(paths.preds, "--preds"), pred_columns(cfg), pred_sites);
    const auto draws = read_draws_file(paths.in_out(paths.draws, "draws.csv"));
    const auto obs_bundle = build_distance_bundle(net, sites);
    const auto cross_bundle = build_distance_bundle(net, sites, pred_sites);
    auto request = cfg.prediction;
    request.seed = cfg.seed;
    const auto result = krige_predict(draws, {obs, pred, obs_bundle, cross_bundle, cfg.model}, request);
    ensure_dir(paths.out_dir);
    write_file(paths.out("predictions.csv"), [&](std::ostream& o) { write_prediction_draws(o, result); });
    write_file(paths.out("predictions_summary.csv"),
               [&](std::ostream& o) { write_prediction_summary(o, summarize_predictions(result)); });
    out << "predict: " << result.cells() << " cells x " << result.draws() << " draws\n";
}

void cmd_exceed(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const auto pred = read_prediction_draws_file(paths.in_out(paths.predictions, "predictions.csv"));
    const auto rows = exceedance_prob(pred, cfg.threshold);
    ensure_dir(paths.out_dir);
    write_file(paths.out("exceedance.csv"), [&](std::ostream& o) { write_exceedance(o, rows); });
    out << "exceed: " << rows.size() << " cells at threshold " << csv::format(cfg.threshold) << '\n';
}

void cmd_score(const RunConfig& cfg, const Paths& paths, std::ostream& out) {
    const auto pred = read_prediction_draws_file(paths.in_out(paths.predictions, "predictions.csv"));
    const auto table = csv::read_file(require(paths.truth, "--truth"));
    const auto c_loc = table.column("locID"), c_time = table.column("time"), c_resp = table.column(cfg.response);
    std::map<std::pair<int, int>, double> truth_by_cell;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = paths.truth + " row " + std::to_string(r + 1);
        truth_by_cell[{csv::to_int(row[c_loc], ctx), csv::to_int(row[c_time], ctx)}] = csv::to_double(row[c_resp], ctx);
    }
    std::vector<double> truth, means;
    for (Eigen::Index c = 0; c < pred.cells(); ++c) {
        auto it = truth_by_cell.find({pred.locIDs[static_cast<std::size_t>(c)], pred.times[static_cast<std::size_t>(c)]});
        if (it == truth_by_cell.end())
            throw input_error("truth file has no value for locID " + std::to_string(pred.locIDs[static_cast<std::size_t>(c)]) +
                              " at time " + std::to_string(pred.times[static_cast<std::size_t>(c)]));
        truth.push_back(it->second);
        means.push_back(pred.values.row(c).mean());
    }
    const double error = rmspe(means, truth);
    const double coverage = interval_coverage(pred, truth, cfg.level);
    ensure_dir(paths.out_dir);
    write_file(paths.out("score.csv"), [&](std::ostream& o) {
        csv::write_row(o, {"n", "rmspe", "coverage", "level"});
        csv::write_row(o, {std::to_string(truth.size()), csv::format(error), csv::format(coverage), csv::format(cfg.level)});
    });
    out << "score: rmspe " << csv::format(error) << ", coverage " << csv::format(coverage) << '\n';
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Input: return 3;
        case ErrorKind::Numeric: return 4;
        case ErrorKind::Io: return 5;
    }
    return 1;
}

std::string one_line(std::string s) {
    for (auto& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

}  // namespace

KeyValues parse_config(std::istream& in, const std::string& source) {
    KeyValues kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(source + ":" + std::to_string(line_no) + ": expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return parse_config(in, path);
}

RunConfig RunConfig::from(const KeyValues& kv) {
    const Reader r(kv);
    RunConfig c;
    r.get("response", c.response);
    if (r.has("covariates")) c.covariates = split_list(kv.at("covariates"));
    r.get("intercept", c.intercept);
    if (r.has("kernels")) {
        c.model.kernels.clear();
        for (const auto& name : split_list(kv.at("kernels"))) c.model.kernels.push_back(parse_kernel(name));
        validate_kernels(c.model.kernels);
        if (c.model.kernels.empty()) throw config_error("'kernels' lists no kernel");
    }
    if (r.has("time_method")) {
        const auto& m = kv.at("time_method");
        if (m == "ar") c.model.mode = TemporalMode::AR;
        else if (m == "var") c.model.mode = TemporalMode::VAR;
        else throw config_error("time_method must be 'ar' or 'var'");
    }
    r.get("seed", c.seed);
    r.get("iter", c.sampler.iter);
    r.get("warmup", c.sampler.warmup);
    r.get("chains", c.sampler.chains);
    r.get("thin", c.sampler.thin);
    r.get("threads", c.sampler.threads);
    r.get("refresh", c.sampler.refresh);
    r.get("target_accept", c.sampler.target_accept);
    r.get("adapt_window", c.sampler.adapt_window);
    r.get("initial_scale", c.sampler.initial_scale);
    r.get("prior_only", c.sampler.prior_only);
    c.prior_overrides.range_upper = 0.0;
    r.get("sd_upper", c.prior_overrides.sd_upper);
    r.get("beta_var", c.prior_overrides.beta_var);
    r.get("range_upper", c.prior_overrides.range_upper);
    r.get("nsamples", c.prediction.nsamples);
    r.get("chunk_size", c.prediction.chunk_size);
    r.get("add_noise", c.prediction.add_noise);
    if (r.has("locID_pred"))
        for (double v : r.numbers("locID_pred")) c.prediction.locID_pred.push_back(static_cast<int>(v));
    r.get("threshold", c.threshold);
    r.get("level", c.level);

    auto& sim = c.simulation;
    sim.kernels = c.model.kernels;
    if (r.has("beta")) sim.beta = to_vector(r.numbers("beta"));
    r.get("sigma2_u", sim.params.sigma2_u);
    r.get("alpha_u", sim.params.alpha_u);
    r.get("sigma2_d", sim.params.sigma2_d);
    r.get("alpha_d", sim.params.alpha_d);
    r.get("sigma2_e", sim.params.sigma2_e);
    r.get("alpha_e", sim.params.alpha_e);
    r.get("sigma2_0", sim.params.sigma2_0);
    if (r.has("phi")) {
        const auto phi = r.numbers("phi");
        sim.transition = c.model.mode == TemporalMode::AR && phi.size() == 1 ? TransitionSpec::ar(phi.front())
                                                                            : TransitionSpec::var(to_vector(phi));
    }
    r.get("extra_noise_sd", sim.extra_noise_sd);
    r.get("T", sim.T);
    r.get("first_time", sim.first_time);
    r.get("missing_rate", sim.missing_rate);
    r.get("n_segments", c.generator.n_segments);
    r.get("obs_spacing", c.generator.obs_spacing);
    r.get("pred_spacing", c.generator.pred_spacing);
    if (c.covariates.empty())
        for (Eigen::Index k = 1; k < sim.beta.size(); ++k) c.covariates.push_back("X" + std::to_string(k));
    return c;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Bayesian space-time regression and kriging on stream networks", "streamst"};
    app.require_subcommand(1);
    app.fallthrough();

    Paths paths;
    std::map<std::string, std::string> numeric_flags;
    std::vector<std::string> sets;
    bool no_noise = false;
    app.add_option("--network", paths.network, "network CSV (rid,to_rid,length,afv)");
    app.add_option("--sites", paths.sites, "observation sites CSV (locID,rid,upDist,x,y)");
    app.add_option("--pred-sites", paths.pred_sites, "prediction sites CSV");
    app.add_option("--obs", paths.obs, "observation data CSV (locID,pid,time,<response>,<covariates>)");
    app.add_option("--preds", paths.preds, "prediction data CSV (locID,pid,time,<covariates>)");
    app.add_option("--draws", paths.draws, "posterior draws CSV (default <out-dir>/draws.csv)");
    app.add_option("--predictions", paths.predictions, "prediction draws CSV (default <out-dir>/predictions.csv)");
    app.add_option("--truth", paths.truth, "truth CSV (locID,time,<response>)");
    app.add_option("--config", paths.config, "key = value configuration file");
    app.add_option("--out-dir", paths.out_dir, "output directory");
    struct NumericFlag {
        std::string flag, key, help;
    };
    for (const auto& f : std::vector<NumericFlag>{
             {"--seed", "seed", "root seed for every random stream"},
             {"--threads", "threads", "worker threads for chains and prediction chunks"},
             {"--iter", "iter", "iterations per chain, warmup included"},
             {"--warmup", "warmup", "adaptation iterations discarded per chain"},
             {"--chains", "chains", "number of chains"},
             {"--thin", "thin", "keep every n-th post-warmup draw"},
             {"--nsamples", "nsamples", "posterior draws used for prediction"},
             {"--chunk-size", "chunk_size", "posterior draws per prediction chunk"},
             {"--threshold", "threshold", "exceedance threshold"},
             {"--refresh", "refresh", "progress line every n iterations (0 = silent)"},
             {"--level", "level", "predictive interval level for score"}})
        app.add_option_function<std::string>(
               f.flag, [&numeric_flags, key = f.key](const std::string& v) { numeric_flags[key] = v; }, f.help)
            ->type_name("NUM");
    app.add_option("--set", sets, "override a configuration key (key=value), repeatable");
    app.add_flag("--no-noise", no_noise, "predict without the nugget noise draw");

    std::string command;
    for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
             {"generate-network", "random network with observation and prediction sites"},
             {"simulate", "simulate a space-time panel on a network"},
             {"distances", "write distance, connectivity and weight matrices"},
             {"fit", "sample the posterior"},
             {"predict", "krige at prediction sites from posterior draws"},
             {"exceed", "exceedance probabilities of prediction draws"},
             {"score", "RMSPE and interval coverage against a truth file"}})
        app.add_subcommand(name, help)->callback([&command, name = name] { command = name; });

    try {
        try {
            std::vector<std::string> args;
            for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
            app.parse(args);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::ParseError& e) {
            throw config_error(e.what());
        }

        KeyValues kv;
        if (!paths.config.empty()) kv = read_config_file(paths.config);
        for (const auto& [k, v] : numeric_flags) kv[k] = v;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw config_error("--set expects key=value");
            kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
        }
        if (no_noise) kv["add_noise"] = "false";
        const RunConfig cfg = RunConfig::from(kv);

        if (command == "generate-network") cmd_generate_network(cfg, paths, out);
        else if (command == "simulate") cmd_simulate(cfg, paths, out);
        else if (command == "distances") cmd_distances(paths, out);
        else if (command == "fit") cmd_fit(cfg, paths, out, err);
        else if (command == "predict") cmd_predict(cfg, paths, out);
        else if (command == "exceed") cmd_exceed(cfg, paths, out);
        else if (command == "score") cmd_score(cfg, paths, out);
        return 0;
    } catch (const Error& e) {
        err << e.category() << ": " << one_line(e.what()) << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        err << "internal-error: " << one_line(e.what()) << '\n';
        return 1;
    }
}

}  // namespace streamst::cli
