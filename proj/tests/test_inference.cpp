#include <doctest.h>

#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "streamst/error.hpp"
#include "streamst/inference.hpp"
#include "streamst/stats.hpp"

using namespace streamst;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const ModelSpec kTailDown{{{KernelFamily::TailDown, KernelShape::Exponential}}, TemporalMode::AR};

ParamState taildown_state(const Vector& beta, double phi, double sigma_d, double alpha_d, double sigma_0) {
    ParamState s;
    s.beta = beta;
    s.phi = Vector::Constant(1, phi);
    s.sigma_d = sigma_d;
    s.alpha_d = alpha_d;
    s.sigma_0 = sigma_0;
    return s;
}

struct Toy {
    StreamNetwork net = fixtures::y_network();
    SiteSet sites = fixtures::y_sites();
    DistanceBundle bundle = build_distance_bundle(net, sites);
};

}  // namespace

TEST_CASE("standard normal log-likelihood") {
    const StreamNetwork net({{1, kOutlet, 1.0, 1.0}});
    const SiteSet sites{{1, 1, 0.5, 0, 0}};
    const auto b = build_distance_bundle(net, sites);
    const Panel p = fixtures::make_panel(Matrix::Zero(1, 1), Vector::Zero(1), 1);
    ParamState s = taildown_state(Vector::Zero(1), 0.0, 0.0, 1.0, 1.0);
    CHECK(log_likelihood(p, s, kTailDown, b) == doctest::Approx(-0.918939).epsilon(1e-6));
}

TEST_CASE("phi = 0 factorizes over time points") {
    Toy toy;
    auto rng = make_rng(3, Stream::Simulation);
    const Matrix X = fixtures::random_design(rng, 6, 2);
    const Vector y = standard_normal(rng, 6);
    const Panel p = fixtures::make_panel(X, y, 3);
    const ParamState s = taildown_state((Vector(2) << 0.3, -0.2).finished(), 0.0, 1.2, 4.0, 0.5);
    const Matrix Q = innovation_cov(mixture_cov(kTailDown.kernels, s.spatial(), toy.bundle, false), 0.25);
    const Vector r = y - X * s.beta;
    const double expected = fixtures::mvn_logpdf(r.head(3), Vector::Zero(3), Q) +
                            fixtures::mvn_logpdf(r.tail(3), Vector::Zero(3), Q);
    CHECK(log_likelihood(p, s, kTailDown, toy.bundle) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("conditional factorization equals the dense joint Gaussian") {
    auto rng = make_rng(4, Stream::Simulation);
    const std::vector<KernelShape> shapes{KernelShape::Exponential, KernelShape::Spherical, KernelShape::LinearWithSill};
    for (int rep = 0; rep < 30; ++rep) {
        const auto g = fixtures::random_network(100 + static_cast<std::uint64_t>(rep), 6, 1.5);
        SiteSet sites(g.obs.begin(), g.obs.begin() + std::min<std::size_t>(g.obs.size(), 5));
        const auto S = static_cast<Eigen::Index>(sites.size());
        const Eigen::Index T = 1 + rep % 4;
        const auto b = build_distance_bundle(g.network, sites);
        const ModelSpec model{{{KernelFamily::TailUp, shapes[rep % 3]},
                               {KernelFamily::TailDown, shapes[(rep + 1) % 3]},
                               {KernelFamily::Euclidean, KernelShape::Gaussian}},
                              rep % 2 ? TemporalMode::VAR : TemporalMode::AR};
        ParamState s;
        s.beta = standard_normal(rng, 2);
        s.phi = model.mode == TemporalMode::AR ? Vector::Constant(1, fixtures::uniform(rng, -0.9, 0.9))
                                               : Vector(Vector::NullaryExpr(S, [&] { return fixtures::uniform(rng, -0.9, 0.9); }));
        s.sigma_u = fixtures::uniform(rng, 0.2, 2);
        s.alpha_u = fixtures::uniform(rng, 1, 10);
        s.sigma_d = fixtures::uniform(rng, 0.2, 2);
        s.alpha_d = fixtures::uniform(rng, 1, 10);
        s.sigma_e = fixtures::uniform(rng, 0.2, 2);
        s.alpha_e = fixtures::uniform(rng, 1, 10);
        s.sigma_0 = fixtures::uniform(rng, 0.2, 1);
        const Matrix X = fixtures::random_design(rng, S * T, 2);
        const Vector y = standard_normal(rng, S * T) * 2.0;
        const Panel p = fixtures::make_panel(X, y, S);

        const Matrix Q = mixture_cov(model.kernels, s.spatial(), b, true);
        const Matrix Phi = transition_diagonal(s.transition(model.mode), S).asDiagonal();
        const double dense = fixtures::mvn_logpdf(y, X * s.beta, joint_spacetime_cov(Phi, Q, T));
        CHECK(std::abs(log_likelihood(p, s, model, b) - dense) < 1e-8);
    }
}

TEST_CASE("log-likelihood is -inf for a singular innovation covariance") {
    Toy toy;
    const Panel p = fixtures::make_panel(Matrix::Ones(3, 1), Vector::Zero(3), 3);
    const ParamState s = taildown_state(Vector::Zero(1), 0.2, 0.0, 1.0, 0.0);
    CHECK(log_likelihood(p, s, kTailDown, toy.bundle) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("log prior") {
    PriorSpec prior;
    prior.range_upper = 20.0;
    ParamState s = taildown_state(Vector::Zero(2), 0.0, 50.0, 10.0, 50.0);
    const double base = log_prior(s, prior, kTailDown);
    const double constants = -std::log(2.0) - 2.0 * std::log(100.0) - std::log(20.0) -
                             2.0 * 0.5 * std::log(2.0 * std::numbers::pi * 1000.0);
    CHECK(base == doctest::Approx(constants));
    s.beta(0) = 31.6228;
    CHECK(base - log_prior(s, prior, kTailDown) == doctest::Approx(0.5).epsilon(1e-5));
    s.phi(0) = 1.5;
    CHECK(log_prior(s, prior, kTailDown) == -std::numeric_limits<double>::infinity());
    s.phi(0) = 0.0;
    s.alpha_d = 25.0;
    CHECK(log_prior(s, prior, kTailDown) == -std::numeric_limits<double>::infinity());
    s.alpha_d = 1.0;
    s.sigma_0 = 101.0;
    CHECK(log_prior(s, prior, kTailDown) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("prior bounds from the observed sites") {
    Toy toy;
    const auto prior = PriorSpec::for_sites(toy.net, toy.sites);
    CHECK(prior.range_upper == doctest::Approx(20.0));
    CHECK(prior.sd_upper == 100.0);
    CHECK(prior.beta_var == 1000.0);
}

TEST_CASE("parameter layout") {
    const Panel p = fixtures::make_panel(Matrix::Ones(6, 2), (Vector(6) << 1, kNaN, 2, 3, 4, kNaN).finished(), 3);
    const ModelSpec model{{{KernelFamily::TailUp, KernelShape::Exponential}, {KernelFamily::Euclidean, KernelShape::Spherical}},
                          TemporalMode::VAR};
    const ParamLayout layout(model, p);
    CHECK(layout.names() == std::vector<std::string>{"beta[1]", "beta[2]", "phi[1]", "phi[2]", "phi[3]", "sigma_u",
                                                     "alpha_u", "sigma_e", "alpha_e", "sigma_0", "y_mis[2]", "y_mis[6]"});
    ParamState s;
    s.beta = Vector::Constant(2, 0.5);
    s.phi = Vector::Constant(3, 0.1);
    s.sigma_u = 1.1;
    s.alpha_u = 2.2;
    s.sigma_e = 3.3;
    s.alpha_e = 4.4;
    s.sigma_0 = 0.7;
    s.y_missing = (Vector(2) << 9, 8).finished();
    const ParamState back = layout.unpack(layout.pack(s));
    CHECK(back.alpha_e == 4.4);
    CHECK(back.y_missing(1) == 8.0);
    CHECK(layout.index_of("sigma_0") == 9);
    CHECK_THROWS_AS(layout.index_of("sigma_d"), Error);
}

TEST_CASE("imputation") {
    Toy toy;
    SUBCASE("no missing entries") {
        auto rng = make_rng(1, Stream::Chain);
        const Panel p = fixtures::make_panel(Matrix::Ones(3, 1), Vector::Zero(3), 3);
        CHECK(impute_missing(p, taildown_state(Vector::Zero(1), 0.5, 1, 2, 1), kTailDown, toy.bundle, rng).size() == 0);
    }
    SUBCASE("zero sills give independent draws around x'beta") {
        auto rng = make_rng(2, Stream::Chain);
        const Panel p = fixtures::make_panel(Matrix::Ones(6, 1), (Vector(6) << 100, kNaN, -100, 50, 50, 50).finished(), 3);
        const ParamState s = taildown_state(Vector::Constant(1, 2.0), 0.0, 0.0, 1.0, 1.0);
        std::vector<double> draws;
        for (int i = 0; i < 10000; ++i) draws.push_back(impute_missing(p, s, kTailDown, toy.bundle, rng)(0));
        CHECK(std::abs(stats::mean(draws) - 2.0) < 3.0 / 100.0);
        CHECK(stats::sd(draws) == doctest::Approx(1.0).epsilon(0.03));
    }
    SUBCASE("matches the dense conditional Gaussian") {
        auto rng = make_rng(3, Stream::Chain);
        const Eigen::Index S = 3, T = 4;
        for (auto mode : {TemporalMode::AR, TemporalMode::VAR}) {
            const ModelSpec model{{{KernelFamily::TailDown, KernelShape::Exponential},
                                   {KernelFamily::TailUp, KernelShape::Spherical}},
                                  mode};
            ParamState s = taildown_state((Vector(2) << 1.0, -0.5).finished(), 0.7, 1.3, 6.0, 0.4);
            if (mode == TemporalMode::VAR) s.phi = (Vector(3) << 0.8, -0.2, 0.5).finished();
            s.sigma_u = 0.9;
            s.alpha_u = 8.0;
            const Matrix X = fixtures::random_design(rng, S * T, 2);
            Vector y = X * s.beta + standard_normal(rng, S * T);
            const std::vector<Eigen::Index> miss{1, 3, 5, 6, 11};
            for (auto r : miss) y(r) = kNaN;
            const Panel p = fixtures::make_panel(X, y, S);

            const Matrix Phi = transition_diagonal(s.transition(mode), S).asDiagonal();
            const Matrix J = joint_spacetime_cov(Phi, mixture_cov(model.kernels, s.spatial(), toy.bundle, true), T);
            std::vector<Eigen::Index> obs;
            for (Eigen::Index r = 0; r < S * T; ++r)
                if (std::find(miss.begin(), miss.end(), r) == miss.end()) obs.push_back(r);
            const Vector mu = X * s.beta;
            const Matrix Jmo = J(miss, obs), Joo = J(obs, obs), Jmm = J(miss, miss);
            const Vector yo = y(obs), muo = mu(obs), mum = mu(miss);
            const Vector cond_mean = mum + Jmo * Joo.ldlt().solve(yo - muo);
            const Matrix cond_cov = Jmm - Jmo * Joo.ldlt().solve(Jmo.transpose());

            const int n = 10000;
            Matrix draws(static_cast<Eigen::Index>(miss.size()), n);
            for (int i = 0; i < n; ++i) draws.col(i) = impute_missing(p, s, model, toy.bundle, rng);
            const Vector mean = draws.rowwise().mean();
            const Matrix centered = draws.colwise() - mean;
            const Matrix cov = centered * centered.transpose() / (n - 1);
            for (Eigen::Index k = 0; k < mean.size(); ++k) {
                CHECK(std::abs(mean(k) - cond_mean(k)) < 3.0 * std::sqrt(cond_cov(k, k) / n));
                CHECK(cov(k, k) == doctest::Approx(cond_cov(k, k)).epsilon(0.06));
            }
        }
    }
}

TEST_CASE("initial state") {
    Toy toy;
    auto rng = make_rng(5, Stream::Simulation);
    const Matrix X = fixtures::random_design(rng, 12, 2);
    Vector y = X * Vector::Constant(2, 3.0) + 0.1 * standard_normal(rng, 12);
    y(4) = kNaN;
    const Panel p = fixtures::make_panel(X, y, 3);
    const auto prior = PriorSpec::for_sites(toy.net, toy.sites);
    const ParamState s = initial_state(p, kTailDown, prior);
    CHECK(s.beta(0) == doctest::Approx(3.0).epsilon(0.1));
    CHECK(s.phi(0) == 0.0);
    CHECK(s.alpha_d == doctest::Approx(0.1 * prior.range_upper));
    CHECK(s.y_missing.size() == 1);
    CHECK(std::isfinite(log_prior(s, prior, kTailDown) + log_likelihood(p, s, kTailDown, toy.bundle)));
}

TEST_CASE("fitting") {
    Toy toy;
    auto rng = make_rng(6, Stream::Simulation);
    const Matrix X = fixtures::random_design(rng, 15, 2);
    Vector y = X * Vector::Constant(2, 1.0) + standard_normal(rng, 15);
    y(7) = kNaN;
    const Panel p = fixtures::make_panel(X, y, 3);
    const auto prior = PriorSpec::for_sites(toy.net, toy.sites);
    SamplerConfig cfg;
    cfg.iter = 205;
    cfg.warmup = 100;
    cfg.thin = 2;
    cfg.chains = 2;
    cfg.seed = 77;

    SUBCASE("kept draws, names and reproducibility") {
        const auto a = fit(p, kTailDown, toy.bundle, prior, cfg);
        CHECK(a.size() == 2 * 53);
        CHECK(a.n_chains() == 2);
        CHECK(a.names.back() == "y_mis[8]");
        CHECK(a.block_names == std::vector<std::string>{"beta", "spatial", "phi"});
        CHECK(a.acceptance.size() == 2);
        const auto b = fit(p, kTailDown, toy.bundle, prior, cfg);
        CHECK(a.values == b.values);
        cfg.threads = 2;
        const auto c = fit(p, kTailDown, toy.bundle, prior, cfg);
        CHECK(a.values == c.values);
        cfg.seed = 78;
        const auto d = fit(p, kTailDown, toy.bundle, prior, cfg);
        CHECK(a.values != d.values);
    }
    SUBCASE("lp column is the posterior kernel") {
        const auto a = fit(p, kTailDown, toy.bundle, prior, cfg);
        const ParamLayout layout(kTailDown, p);
        for (Eigen::Index r = 0; r < a.size(); r += 17) {
            const ParamState s = layout.unpack(a.values.row(r).transpose());
            CHECK(a.lp(r) == doctest::Approx(log_prior(s, prior, kTailDown) + log_likelihood(p, s, kTailDown, toy.bundle)));
        }
    }
    SUBCASE("a zero proposal scale never moves") {
        Vector full = y;
        full(7) = 1.0;
        const Panel complete = fixtures::make_panel(X, full, 3);
        cfg.initial_scale = 0.0;
        cfg.adapt = false;
        const auto a = fit(complete, kTailDown, toy.bundle, prior, cfg);
        const ParamLayout layout(kTailDown, complete);
        const Vector start = layout.pack(initial_state(complete, kTailDown, prior));
        CHECK((a.values.row(0).transpose() - start).cwiseAbs().maxCoeff() < 1e-9);
        for (Eigen::Index r = 1; r < a.size(); ++r) CHECK(a.values.row(r) == a.values.row(0));
    }
    SUBCASE("configuration errors") {
        cfg.warmup = cfg.iter;
        CHECK_THROWS_WITH_AS(fit(p, kTailDown, toy.bundle, prior, cfg), doctest::Contains("warmup"), Error);
        cfg.warmup = 10;
        cfg.chains = 0;
        CHECK_THROWS_AS(fit(p, kTailDown, toy.bundle, prior, cfg), Error);
    }
    SUBCASE("draws CSV round trip") {
        const auto a = fit(p, kTailDown, toy.bundle, prior, cfg);
        std::stringstream ss;
        write_draws(ss, a);
        const auto b = read_draws(ss);
        CHECK(b.names == a.names);
        CHECK(b.chain == a.chain);
        CHECK(b.values == a.values);
        CHECK(b.lp == a.lp);
    }
}

TEST_CASE("draw summaries") {
    PosteriorDraws d;
    d.names = {"a", "b"};
    d.values = Matrix(6, 2);
    d.values.col(0).setConstant(4.2);
    d.values.col(1) << 1, 2, 3, 1, 2, 3;
    d.lp = Vector::Zero(6);
    d.chain = {1, 1, 1, 2, 2, 2};
    d.iteration = {1, 2, 3, 1, 2, 3};
    const auto s = summarize_draws(d);
    CHECK(s[0].mean == 4.2);
    CHECK(s[0].sd == 0.0);
    CHECK(s[1].q50 == 2.0);
    CHECK(std::isnan(s[1].rhat));
    std::ostringstream out;
    write_summary(out, s);
    CHECK(out.str().rfind("param,mean,sd,q2.5,q50,q97.5,rhat,ess\n", 0) == 0);
    CHECK_THROWS_AS(summarize_draws(PosteriorDraws{}), Error);
}

TEST_CASE("diagnostics") {
    auto rng = make_rng(8, Stream::Chain);
    std::normal_distribution<double> normal;
    std::vector<std::vector<double>> iid(2), ar(2);
    for (int c = 0; c < 2; ++c) {
        double x = 0.0;
        for (int i = 0; i < 20000; ++i) {
            iid[static_cast<std::size_t>(c)].push_back(normal(rng));
            x = 0.5 * x + normal(rng);
            ar[static_cast<std::size_t>(c)].push_back(x);
        }
    }
    CHECK(std::abs(stats::split_rhat(iid) - 1.0) < 0.01);
    CHECK(stats::effective_sample_size(iid) == doctest::Approx(40000.0).epsilon(0.1));
    CHECK(stats::effective_sample_size(ar) == doctest::Approx(40000.0 / 3.0).epsilon(0.15));

    std::vector<std::vector<double>> shifted = iid;
    for (auto& v : shifted[1]) v += 1.0;
    CHECK(stats::split_rhat(shifted) > 1.1);

    const std::vector<double> three{3, 1, 2};
    CHECK(stats::quantile(three, 0.5) == 2.0);
    CHECK(stats::quantile(three, 0.25) == 1.5);
    CHECK(stats::normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-6));
    CHECK(stats::ks_pvalue(1.358 / std::sqrt(10000.0), 10000) == doctest::Approx(0.05).epsilon(0.05));
    std::vector<double> u;
    for (int i = 0; i < 5000; ++i) u.push_back(std::uniform_real_distribution<double>()(rng));
    CHECK(stats::ks_pvalue(stats::ks_statistic(u, [](double x) { return x; }), u.size()) > 0.001);
    CHECK(stats::ks_pvalue(stats::ks_statistic(u, [](double x) { return x * x; }), u.size()) < 1e-6);
}
