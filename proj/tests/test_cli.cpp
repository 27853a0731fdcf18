#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "streamst/cli.hpp"
#include "streamst/csv.hpp"
#include "streamst/error.hpp"

using namespace streamst;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "streamst");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("streamst_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("config parsing") {
    std::istringstream in("# comment\nresponse = temp\ncovariates = a, b  # trailing\n\nkernels=Exponential.tailup,Spherical.taildown\n");
    const auto kv = cli::parse_config(in);
    CHECK(kv.at("response") == "temp");
    CHECK(kv.at("covariates") == "a, b");
    const auto cfg = cli::RunConfig::from(kv);
    CHECK(cfg.covariates == std::vector<std::string>{"a", "b"});
    CHECK(cfg.model.kernels.size() == 2);
    CHECK(cfg.model.kernels[1] == KernelSpec{KernelFamily::TailDown, KernelShape::Spherical});

    std::istringstream bad("just words\n");
    CHECK_THROWS_AS(cli::parse_config(bad), Error);
    CHECK_THROWS_WITH_AS(cli::RunConfig::from({{"iterations", "5"}}), doctest::Contains("unknown configuration key"), Error);
    CHECK_THROWS_AS(cli::RunConfig::from({{"iter", "many"}}), Error);
    CHECK_THROWS_AS(cli::RunConfig::from({{"time_method", "arma"}}), Error);

    const auto var = cli::RunConfig::from({{"time_method", "var"}, {"phi", "0.1,0.2"}, {"beta", "1,2"}});
    CHECK(var.model.mode == TemporalMode::VAR);
    CHECK(var.simulation.transition.phi.size() == 2);
    CHECK(var.covariates == std::vector<std::string>{"X1"});
}

TEST_CASE("error categories and exit codes") {
    auto r = run({"fit", "--iter", "10", "--warmup", "10"});
    CHECK(r.code != 0);
    CHECK(r.err.rfind("config-error: ", 0) == 0);
    CHECK(r.err.find("warmup") != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

    r = run({"fit", "--network", "/nonexistent/network.csv", "--sites", "x", "--obs", "y"});
    CHECK(r.code != 0);
    CHECK(r.err.rfind("io-error: ", 0) == 0);

    r = run({"frobnicate"});
    CHECK(r.code != 0);
    CHECK(r.err.rfind("config-error: ", 0) == 0);

    r = run({"simulate", "--set", "nonsense"});
    CHECK(r.err.rfind("config-error: ", 0) == 0);

    const auto dir = scratch("bad_input");
    std::ofstream(dir / "network.csv") << "rid,to_rid,length,afv\n1,2,1,1\n2,1,1,1\n";
    std::ofstream(dir / "sites.csv") << "locID,rid,upDist,x,y\n";
    r = run({"distances", "--network", (dir / "network.csv").string(), "--sites", (dir / "sites.csv").string()});
    CHECK(r.err.rfind("input-error: ", 0) == 0);
    CHECK(r.err.find("cycle detected") != std::string::npos);
}

TEST_CASE("distances on the Y network") {
    const auto dir = scratch("distances");
    {
        std::ofstream net(dir / "network.csv");
        write_network(net, fixtures::y_network());
        std::ofstream sites(dir / "sites.csv");
        write_sites(sites, fixtures::y_sites());
    }
    const auto r = run({"distances", "--network", (dir / "network.csv").string(), "--sites",
                        (dir / "sites.csv").string(), "--pred-sites", (dir / "sites.csv").string(), "--out-dir",
                        dir.string()});
    REQUIRE(r.code == 0);
    CHECK(slurp(dir / "H.csv") == "locID,1,2,3\n1,0,5,3\n2,5,0,4\n3,3,4,0\n");
    CHECK(slurp(dir / "D.csv") == "locID,1,2,3\n1,0,2,3\n2,3,0,4\n3,0,0,0\n");
    CHECK(slurp(dir / "flow_con.csv") == "locID,1,2,3\n1,1,0,1\n2,0,1,1\n3,1,1,1\n");
    CHECK(fs::exists(dir / "W_op.csv"));
    CHECK(slurp(dir / "H_op.csv") == slurp(dir / "H.csv"));
}

TEST_CASE("end-to-end pipeline") {
    const auto dir = scratch("pipeline");
    const std::string d = dir.string();
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "n_segments = 30\nobs_spacing = 1.5\npred_spacing = 2\nT = 4\nmissing_rate = 0.3\n"
               "iter = 400\nwarmup = 200\nchains = 2\nnsamples = 50\n";
    }
    const std::string cfg = (dir / "run.cfg").string();
    REQUIRE(run({"generate-network", "--config", cfg, "--seed", "3", "--out-dir", d}).code == 0);
    REQUIRE(run({"simulate", "--config", cfg, "--seed", "4", "--network", d + "/network.csv", "--sites",
                 d + "/obs_sites.csv", "--pred-sites", d + "/pred_sites.csv", "--out-dir", d})
                .code == 0);
    const auto header = slurp(dir / "obs.csv").substr(0, 26);
    CHECK(header == "locID,pid,time,y,X1,X2,X3\n");
    CHECK(slurp(dir / "pred_truth.csv").rfind("locID,pid,time,y\n", 0) == 0);

    auto fit = run({"fit", "--config", cfg, "--seed", "5", "--refresh", "100", "--network", d + "/network.csv",
                    "--sites", d + "/obs_sites.csv", "--obs", d + "/obs.csv", "--out-dir", d});
    REQUIRE(fit.code == 0);
    CHECK(fit.err.find("chain 2: iteration 400 / 400") != std::string::npos);
    for (auto f : {"draws.csv", "summary.csv", "acceptance.csv", "imputed.csv"}) CHECK(fs::exists(dir / f));
    CHECK(slurp(dir / "summary.csv").rfind("param,mean,sd,q2.5,q50,q97.5,rhat,ess\n", 0) == 0);
    const auto draws = read_draws_file(d + "/draws.csv");
    CHECK(draws.size() == 400);

    REQUIRE(run({"predict", "--config", cfg, "--seed", "6", "--network", d + "/network.csv", "--sites",
                 d + "/obs_sites.csv", "--pred-sites", d + "/pred_sites.csv", "--obs", d + "/obs.csv", "--preds",
                 d + "/pred.csv", "--out-dir", d})
                .code == 0);
    const auto pred = read_prediction_draws_file(d + "/predictions.csv");
    CHECK(pred.draws() == 50);
    CHECK(slurp(dir / "predictions_summary.csv").rfind("locID,time,mean,sd,q2.5,q50,q97.5\n", 0) == 0);

    REQUIRE(run({"exceed", "--threshold", "11.5", "--out-dir", d}).code == 0);
    CHECK(slurp(dir / "exceedance.csv").find(",11.5,") != std::string::npos);

    REQUIRE(run({"score", "--truth", d + "/pred_truth.csv", "--out-dir", d}).code == 0);
    const auto score = csv::read_file(d + "/score.csv");
    CHECK(score.header == std::vector<std::string>{"n", "rmspe", "coverage", "level"});
    CHECK(csv::to_double(score.rows[0][1], "rmspe") > 0.0);

    SUBCASE("same seed, byte-identical outputs") {
        const auto again = scratch("pipeline_again");
        const std::string a = again.string();
        REQUIRE(run({"fit", "--config", cfg, "--seed", "5", "--threads", "2", "--network", d + "/network.csv",
                     "--sites", d + "/obs_sites.csv", "--obs", d + "/obs.csv", "--out-dir", a})
                    .code == 0);
        CHECK(slurp(again / "draws.csv") == slurp(dir / "draws.csv"));
        CHECK(slurp(again / "summary.csv") == slurp(dir / "summary.csv"));
    }
    SUBCASE("flags override the config file") {
        const auto other = scratch("pipeline_flags");
        REQUIRE(run({"fit", "--config", cfg, "--seed", "5", "--iter", "300", "--set", "chains=1", "--network",
                     d + "/network.csv", "--sites", d + "/obs_sites.csv", "--obs", d + "/obs.csv", "--out-dir",
                     other.string()})
                    .code == 0);
        CHECK(read_draws_file((other / "draws.csv").string()).size() == 100);
    }
    SUBCASE("nsamples beyond the kept draws") {
        const auto r = run({"predict", "--config", cfg, "--nsamples", "100000", "--network", d + "/network.csv",
                            "--sites", d + "/obs_sites.csv", "--pred-sites", d + "/pred_sites.csv", "--obs",
                            d + "/obs.csv", "--preds", d + "/pred.csv", "--out-dir", d});
        CHECK(r.err.rfind("config-error: ", 0) == 0);
    }
}
