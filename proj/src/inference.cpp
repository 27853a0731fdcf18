#include "streamst/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>

#include "streamst/csv.hpp"
#include "streamst/error.hpp"
#include "streamst/stats.hpp"

namespace streamst {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

bool all_equal(const Vector& v) { return v.size() == 0 || (v.array() == v(0)).all(); }

/// Cholesky of the innovation covariance Q = Sigma + sigma_0^2 I.
struct InnovationFactor {
    SpatialParams params;
    Matrix Q;
    Eigen::LLT<Matrix> llt;
    double logdet = 0.0;
    bool ok = false;
};

InnovationFactor factor_innovation(const ModelSpec& model, const SpatialParams& params, const DistanceBundle& bundle) {
    InnovationFactor f;
    f.params = params;
    f.Q = innovation_cov(mixture_cov(model.kernels, params, bundle, false), params.sigma2_0);
    f.llt.compute(f.Q);
    f.ok = f.llt.info() == Eigen::Success;
    if (f.ok) {
        f.logdet = 2.0 * f.llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        f.ok = std::isfinite(f.logdet);
    }
    return f;
}

bool same_params(const SpatialParams& a, const SpatialParams& b) {
    return a.sigma2_u == b.sigma2_u && a.alpha_u == b.alpha_u && a.sigma2_d == b.sigma2_d && a.alpha_d == b.alpha_d &&
           a.sigma2_e == b.sigma2_e && a.alpha_e == b.alpha_e && a.sigma2_0 == b.sigma2_0;
}

/// Log-likelihood of the residual panel r = y - X beta under the stationary VAR(1).
double loglik_residuals(const Vector& r, Eigen::Index S, Eigen::Index T, const Vector& phi,
                        const InnovationFactor& f) {
    if (!f.ok) return kNegInf;
    const Eigen::Map<const Matrix> R(r.data(), S, T);
    double logdet_v = 0.0;
    double quad0 = 0.0;
    if (all_equal(phi)) {
        const double c = 1.0 - phi(0) * phi(0);
        logdet_v = f.logdet - static_cast<double>(S) * std::log(c);
        quad0 = c * f.llt.matrixL().solve(R.col(0)).squaredNorm();
    } else {
        const Matrix V = stationary_cov(phi.asDiagonal().toDenseMatrix(), f.Q);
        Eigen::LLT<Matrix> v_llt(V);
        if (v_llt.info() != Eigen::Success) return kNegInf;
        logdet_v = 2.0 * v_llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        quad0 = v_llt.matrixL().solve(R.col(0)).squaredNorm();
    }
    double quad = 0.0;
    if (T > 1) {
        const Matrix innov = R.rightCols(T - 1) - phi.asDiagonal() * R.leftCols(T - 1);
        quad = f.llt.matrixL().solve(innov).squaredNorm();
    }
    const double ll = -0.5 * (static_cast<double>(S * T) * kLog2Pi + logdet_v + static_cast<double>(T - 1) * f.logdet +
                              quad0 + quad);
    return std::isfinite(ll) ? ll : kNegInf;
}

/// Entry of the joint precision of the stationary VAR(1) process, block tridiagonal in time.
class Precision {
public:
    Precision(const InnovationFactor& f, const Vector& phi, Eigen::Index S, Eigen::Index T) : phi_(phi), S_(S), T_(T) {
        const Matrix I = Matrix::Identity(S, S);
        Qi_ = f.llt.solve(I);
        if (all_equal(phi)) {
            Vi_ = (1.0 - phi(0) * phi(0)) * Qi_;
        } else {
            Eigen::LLT<Matrix> v_llt(stationary_cov(phi.asDiagonal().toDenseMatrix(), f.Q));
            if (v_llt.info() != Eigen::Success) throw numeric_error("stationary covariance is not positive definite");
            Vi_ = v_llt.solve(I);
        }
    }

    double operator()(Eigen::Index r1, Eigen::Index r2) const {
        const Eigen::Index t1 = r1 / S_, s1 = r1 % S_, t2 = r2 / S_, s2 = r2 % S_;
        if (t1 == t2) {
            double v = (t1 == 0 ? Vi_(s1, s2) : Qi_(s1, s2));
            if (t1 < T_ - 1) v += phi_(s1) * Qi_(s1, s2) * phi_(s2);
            return v;
        }
        if (t2 == t1 + 1) return -phi_(s1) * Qi_(s1, s2);
        if (t1 == t2 + 1) return -Qi_(s1, s2) * phi_(s2);
        return 0.0;
    }

    /// Precision times a time-major vector.
    Vector apply(const Vector& v) const {
        const Eigen::Map<const Matrix> M(v.data(), S_, T_);
        Matrix out(S_, T_);
        const auto Phi = phi_.asDiagonal();
        for (Eigen::Index t = 0; t < T_; ++t) {
            Vector acc = (t == 0 ? Vi_ : Qi_) * M.col(t);
            if (t < T_ - 1) acc += Phi * (Qi_ * (Phi * M.col(t))) - Phi * (Qi_ * M.col(t + 1));
            if (t > 0) acc -= Qi_ * (Phi * M.col(t - 1));
            out.col(t) = acc;
        }
        return Eigen::Map<const Vector>(out.data(), S_ * T_);
    }

private:
    Matrix Qi_, Vi_;
    Vector phi_;
    Eigen::Index S_, T_;
};

Vector impute_with(const Panel& panel, const ParamState& state, const InnovationFactor& f, const Vector& phi,
                   Rng& rng) {
    const auto rows = panel.missing_rows();
    const auto m = static_cast<Eigen::Index>(rows.size());
    if (m == 0) return Vector(0);
    if (!f.ok) throw numeric_error("singular conditional covariance: innovation covariance not positive definite");

    const Vector mean_all = panel.X * state.beta;
    Vector resid = Vector::Zero(panel.rows());
    for (Eigen::Index r = 0; r < panel.rows(); ++r)
        if (!panel.missing[static_cast<std::size_t>(r)]) resid(r) = panel.y(r) - mean_all(r);

    const Precision P(f, phi, panel.S, panel.T);
    const Vector p_resid = P.apply(resid);
    Matrix Pmm(m, m);
    Vector rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        rhs(a) = p_resid(rows[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b <= a; ++b)
            Pmm(a, b) = Pmm(b, a) = P(rows[static_cast<std::size_t>(a)], rows[static_cast<std::size_t>(b)]);
    }
    Eigen::LLT<Matrix> llt(Pmm);
    if (llt.info() != Eigen::Success) throw numeric_error("singular conditional covariance");
    const Vector cond_mean = -llt.solve(rhs);
    const Vector noise = llt.matrixU().solve(standard_normal(rng, m));
    Vector out(m);
    for (Eigen::Index a = 0; a < m; ++a) out(a) = mean_all(rows[static_cast<std::size_t>(a)]) + cond_mean(a) + noise(a);
    return out;
}

// ---------------------------------------------------------------------------
// Transformed coordinates for the sampler.

struct Coordinate {
    bool bounded = false;
    double lo = 0.0, hi = 1.0;
};

double log_sigmoid(double u) { return u >= 0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u)); }

double to_natural(const Coordinate& c, double u) {
    if (!c.bounded) return u;
    const double s = u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
    return c.lo + (c.hi - c.lo) * s;
}

double to_unconstrained(const Coordinate& c, double x) {
    if (!c.bounded) return x;
    const double p = (x - c.lo) / (c.hi - c.lo);
    return std::log(p) - std::log1p(-p);
}

double log_jacobian(const Coordinate& c, double u) {
    if (!c.bounded) return 0.0;
    return std::log(c.hi - c.lo) + log_sigmoid(u) + log_sigmoid(-u);
}

/// Maps ParamState (minus y_missing) to an unconstrained vector laid out as
/// beta | phi | spatial parameters, with one proposal block per group.
class Transform {
public:
    Transform(const ModelSpec& model, Eigen::Index p, Eigen::Index n_phi, const PriorSpec& prior)
        : model_(model), p_(p), n_phi_(n_phi) {
        for (Eigen::Index k = 0; k < p; ++k) coords_.push_back({});
        for (Eigen::Index k = 0; k < n_phi; ++k) coords_.push_back({true, prior.phi_lower, prior.phi_upper});
        const Coordinate sd{true, 0.0, prior.sd_upper};
        const Coordinate range{true, 0.0, prior.range_upper};
        for (auto fam : {KernelFamily::TailUp, KernelFamily::TailDown, KernelFamily::Euclidean})
            if (has_family(model.kernels, fam)) {
                coords_.push_back(sd);
                coords_.push_back(range);
            }
        coords_.push_back(sd);

        std::vector<Eigen::Index> beta, phi, spatial;
        for (Eigen::Index k = 0; k < size(); ++k) (k < p ? beta : k < p + n_phi ? phi : spatial).push_back(k);
        if (!beta.empty()) blocks_.push_back({"beta", beta});
        blocks_.push_back({"spatial", spatial});
        blocks_.push_back({"phi", phi});
    }

    Eigen::Index size() const { return static_cast<Eigen::Index>(coords_.size()); }

    struct Block {
        std::string name;
        std::vector<Eigen::Index> idx;
    };
    const std::vector<Block>& blocks() const { return blocks_; }

    Vector forward(const ParamState& s) const {
        Vector x(size());
        x.head(p_) = s.beta;
        x.segment(p_, n_phi_) = s.phi;
        Eigen::Index k = p_ + n_phi_;
        for (auto [fam, sigma, alpha] : families(s)) {
            x(k++) = sigma;
            x(k++) = alpha;
        }
        x(k) = s.sigma_0;
        Vector u(size());
        for (Eigen::Index i = 0; i < size(); ++i) u(i) = to_unconstrained(coords_[static_cast<std::size_t>(i)], x(i));
        return u;
    }

    ParamState backward(const Vector& u, const Vector& y_missing) const {
        Vector x(size());
        for (Eigen::Index i = 0; i < size(); ++i) x(i) = to_natural(coords_[static_cast<std::size_t>(i)], u(i));
        ParamState s;
        s.beta = x.head(p_);
        s.phi = x.segment(p_, n_phi_);
        Eigen::Index k = p_ + n_phi_;
        auto take = [&](KernelFamily fam, double& sigma, double& alpha) {
            if (!has_family(model_.kernels, fam)) return;
            sigma = x(k++);
            alpha = x(k++);
        };
        take(KernelFamily::TailUp, s.sigma_u, s.alpha_u);
        take(KernelFamily::TailDown, s.sigma_d, s.alpha_d);
        take(KernelFamily::Euclidean, s.sigma_e, s.alpha_e);
        s.sigma_0 = x(k);
        s.y_missing = y_missing;
        return s;
    }

    double log_jacobian(const Vector& u) const {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < size(); ++i) acc += streamst::log_jacobian(coords_[static_cast<std::size_t>(i)], u(i));
        return acc;
    }

private:
    struct FamilyValues {
        KernelFamily family;
        double sigma, alpha;
    };
    std::vector<FamilyValues> families(const ParamState& s) const {
        std::vector<FamilyValues> out;
        if (has_family(model_.kernels, KernelFamily::TailUp)) out.push_back({KernelFamily::TailUp, s.sigma_u, s.alpha_u});
        if (has_family(model_.kernels, KernelFamily::TailDown))
            out.push_back({KernelFamily::TailDown, s.sigma_d, s.alpha_d});
        if (has_family(model_.kernels, KernelFamily::Euclidean))
            out.push_back({KernelFamily::Euclidean, s.sigma_e, s.alpha_e});
        return out;
    }

    ModelSpec model_;
    Eigen::Index p_, n_phi_;
    std::vector<Coordinate> coords_;
    std::vector<Block> blocks_;
};

/// Posterior kernel with a two-slot cache of innovation factorizations.
class Evaluator {
public:
    Evaluator(const Panel& panel, const ModelSpec& model, const DistanceBundle& bundle, const PriorSpec& prior,
              bool prior_only)
        : panel_(panel), model_(model), bundle_(bundle), prior_(prior), prior_only_(prior_only) {}

    const InnovationFactor& factor(const SpatialParams& params) {
        for (auto& slot : cache_)
            if (slot.ok_slot && same_params(slot.f.params, params)) return slot.f;
        auto& slot = cache_[next_];
        next_ = 1 - next_;
        slot.f = factor_innovation(model_, params, bundle_);
        slot.ok_slot = true;
        return slot.f;
    }

    struct Value {
        double prior = kNegInf;
        double lik = kNegInf;
        double total() const { return prior + lik; }
    };

    Value evaluate(const ParamState& s) {
        Value v;
        v.prior = log_prior(s, prior_, model_);
        if (!std::isfinite(v.prior)) return v;
        if (prior_only_) {
            v.lik = 0.0;
            return v;
        }
        const Vector r = completed_response(panel_, s) - panel_.X * s.beta;
        v.lik = loglik_residuals(r, panel_.S, panel_.T, transition_diagonal(s.transition(model_.mode), panel_.S),
                                 factor(s.spatial()));
        return v;
    }

    Vector impute(const ParamState& s, Rng& rng) {
        return impute_with(panel_, s, factor(s.spatial()), transition_diagonal(s.transition(model_.mode), panel_.S),
                           rng);
    }

private:
    struct Slot {
        InnovationFactor f;
        bool ok_slot = false;
    };
    const Panel& panel_;
    const ModelSpec& model_;
    const DistanceBundle& bundle_;
    const PriorSpec& prior_;
    bool prior_only_;
    Slot cache_[2];
    int next_ = 0;
};

/// Random-walk proposal for one block: Robbins-Monro scale plus empirical covariance during warmup.
class BlockProposal {
public:
    BlockProposal(std::vector<Eigen::Index> idx, const SamplerConfig& config)
        : idx_(std::move(idx)), d_(static_cast<Eigen::Index>(idx_.size())), config_(config) {
        target_ = config.target_accept > 0.0 ? config.target_accept : (d_ == 1 ? 0.44 : 0.234);
        mean_ = Vector::Zero(d_);
        m2_ = Matrix::Zero(d_, d_);
        refresh_factor();
    }

    void propose(Vector& u, Rng& rng) const {
        const Vector step = factor_ * standard_normal(rng, d_);
        for (Eigen::Index k = 0; k < d_; ++k) u(idx_[static_cast<std::size_t>(k)]) += step(k);
    }

    /// Warmup update with the post-step state and the step's acceptance probability.
    void adapt(const Vector& u, double accept_prob) {
        if (!config_.adapt) return;
        ++n_;
        Vector x(d_);
        for (Eigen::Index k = 0; k < d_; ++k) x(k) = u(idx_[static_cast<std::size_t>(k)]);
        const Vector delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_).transpose();
        log_scale_ += std::pow(static_cast<double>(n_) + 1.0, -0.6) * (accept_prob - target_);
        log_scale_ = std::clamp(log_scale_, -20.0, 10.0);
        const bool ready = n_ > config_.adapt_window && n_ > 2 * d_;
        if (ready && !use_empirical_) {
            use_empirical_ = true;
            log_scale_ = 0.0;
        }
        refresh_factor();
    }

    void record(bool accepted) {
        ++proposed_;
        if (accepted) ++accepted_;
    }
    double acceptance_rate() const { return proposed_ ? static_cast<double>(accepted_) / proposed_ : 0.0; }

private:
    void refresh_factor() {
        if (use_empirical_) {
            Matrix cov = m2_ / static_cast<double>(n_ - 1);
            cov.diagonal().array() += 1e-10;
            Eigen::LLT<Matrix> llt(cov);
            if (llt.info() == Eigen::Success) {
                factor_ = std::exp(log_scale_) * 2.38 / std::sqrt(static_cast<double>(d_)) * Matrix(llt.matrixL());
                return;
            }
        }
        factor_ = std::exp(log_scale_) * config_.initial_scale * Matrix::Identity(d_, d_);
    }

    std::vector<Eigen::Index> idx_;
    Eigen::Index d_;
    const SamplerConfig& config_;
    double target_ = 0.234;
    double log_scale_ = 0.0;
    bool use_empirical_ = false;
    long n_ = 0;
    Vector mean_;
    Matrix m2_;
    Matrix factor_;
    long proposed_ = 0, accepted_ = 0;
};

struct ChainResult {
    Matrix values;
    Vector lp;
    std::vector<double> acceptance;
};

ChainResult run_chain(int chain, const Panel& panel, const ModelSpec& model, const DistanceBundle& bundle,
                      const PriorSpec& prior, const SamplerConfig& config, const ParamLayout& layout,
                      const std::function<void(const std::string&)>& report) {
    Rng rng = make_rng(config.seed, Stream::Chain, static_cast<std::uint64_t>(chain));
    Evaluator eval(panel, model, bundle, prior, config.prior_only);
    const Eigen::Index n_phi = model.mode == TemporalMode::AR ? 1 : panel.S;
    const Transform transform(model, panel.X.cols(), n_phi, prior);
    const bool impute = !panel.missing_rows().empty() && !config.prior_only;

    ParamState state = initial_state(panel, model, prior);
    Vector u = transform.forward(state);
    auto value = eval.evaluate(state);
    std::normal_distribution<double> jitter(0.0, 1.0);
    for (int attempt = 0; !std::isfinite(value.total()); ++attempt) {
        if (attempt >= 100) throw numeric_error("log posterior is -inf at initialization after 100 retries");
        for (Eigen::Index k = panel.X.cols(); k < u.size(); ++k) u(k) += jitter(rng);
        state = transform.backward(u, state.y_missing);
        value = eval.evaluate(state);
    }
    double target = value.total() + transform.log_jacobian(u);

    std::vector<BlockProposal> blocks;
    for (const auto& b : transform.blocks()) blocks.emplace_back(b.idx, config);

    const int kept = (config.iter - config.warmup + config.thin - 1) / config.thin;
    ChainResult out;
    out.values.resize(kept, layout.size());
    out.lp.resize(kept);
    int row = 0;
    for (int it = 0; it < config.iter; ++it) {
        const bool warmup = it < config.warmup;
        if (impute) {
            state.y_missing = eval.impute(state, rng);
            value = eval.evaluate(state);
            target = value.total() + transform.log_jacobian(u);
        }
        for (auto& block : blocks) {
            Vector u_new = u;
            block.propose(u_new, rng);
            const ParamState proposal = transform.backward(u_new, state.y_missing);
            const auto v_new = eval.evaluate(proposal);
            const double t_new = v_new.total() + transform.log_jacobian(u_new);
            const double log_ratio = t_new - target;
            const double accept_prob = std::isfinite(t_new) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
            const bool accept = std::isfinite(t_new) && std::log(std::uniform_real_distribution<double>(0.0, 1.0)(rng)) < log_ratio;
            if (accept) {
                u = std::move(u_new);
                state = proposal;
                value = v_new;
                target = t_new;
            }
            if (warmup)
                block.adapt(u, accept_prob);
            else
                block.record(accept);
        }
        if (!warmup && (it - config.warmup) % config.thin == 0) {
            out.values.row(row) = layout.pack(state).transpose();
            out.lp(row) = value.total();
            ++row;
        }
        if (config.refresh > 0 && report && ((it + 1) % config.refresh == 0 || it + 1 == config.iter))
            report("chain " + std::to_string(chain + 1) + ": iteration " + std::to_string(it + 1) + " / " +
                   std::to_string(config.iter) + (warmup ? " [warmup]" : " [sampling]"));
    }
    for (const auto& b : blocks) out.acceptance.push_back(b.acceptance_rate());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

PriorSpec PriorSpec::for_sites(const StreamNetwork& net, const SiteSet& obs_sites) {
    PriorSpec prior;
    const double max_h = max_hydrologic_distance(net, obs_sites);
    prior.range_upper = 4.0 * max_h;
    if (!(prior.range_upper > 0.0)) prior.range_upper = 4.0 * net.segment(net.outlet()).length;
    return prior;
}

void PriorSpec::validate() const {
    if (!(phi_lower < phi_upper) || phi_lower < -1.0 || phi_upper > 1.0)
        throw config_error("phi bounds must lie within (-1, 1)");
    if (!(range_upper > 0.0) || !std::isfinite(range_upper)) throw config_error("range upper bound must be positive");
    if (!(sd_upper > 0.0) || !std::isfinite(sd_upper)) throw config_error("sd upper bound must be positive");
    if (!(beta_var > 0.0) || !std::isfinite(beta_var)) throw config_error("beta prior variance must be positive");
}

SpatialParams ParamState::spatial() const {
    return {sigma_u * sigma_u, alpha_u, sigma_d * sigma_d, alpha_d, sigma_e * sigma_e, alpha_e, sigma_0 * sigma_0};
}

TransitionSpec ParamState::transition(TemporalMode mode) const { return {mode, phi}; }

ParamLayout::ParamLayout(const ModelSpec& model, const Panel& panel) : model_(model) {
    p_ = panel.X.cols();
    n_phi_ = model.mode == TemporalMode::AR ? 1 : panel.S;
    for (Eigen::Index k = 0; k < p_; ++k) names_.push_back("beta[" + std::to_string(k + 1) + "]");
    if (model.mode == TemporalMode::AR)
        names_.push_back("phi");
    else
        for (Eigen::Index s = 0; s < n_phi_; ++s) names_.push_back("phi[" + std::to_string(s + 1) + "]");
    if (has_family(model.kernels, KernelFamily::TailUp)) names_.insert(names_.end(), {"sigma_u", "alpha_u"});
    if (has_family(model.kernels, KernelFamily::TailDown)) names_.insert(names_.end(), {"sigma_d", "alpha_d"});
    if (has_family(model.kernels, KernelFamily::Euclidean)) names_.insert(names_.end(), {"sigma_e", "alpha_e"});
    names_.push_back("sigma_0");
    for (auto r : panel.missing_rows()) names_.push_back("y_mis[" + std::to_string(panel.pid[static_cast<std::size_t>(r)]) + "]");
    n_missing_ = static_cast<Eigen::Index>(panel.missing_rows().size());
}

Eigen::Index ParamLayout::index_of(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw input_error("unknown parameter '" + name + "'");
    return it - names_.begin();
}

Vector ParamLayout::pack(const ParamState& s) const {
    Vector v(size());
    Eigen::Index k = 0;
    v.segment(k, p_) = s.beta;
    k += p_;
    v.segment(k, n_phi_) = s.phi;
    k += n_phi_;
    if (has_family(model_.kernels, KernelFamily::TailUp)) { v(k++) = s.sigma_u; v(k++) = s.alpha_u; }
    if (has_family(model_.kernels, KernelFamily::TailDown)) { v(k++) = s.sigma_d; v(k++) = s.alpha_d; }
    if (has_family(model_.kernels, KernelFamily::Euclidean)) { v(k++) = s.sigma_e; v(k++) = s.alpha_e; }
    v(k++) = s.sigma_0;
    v.segment(k, n_missing_) = s.y_missing;
    return v;
}

ParamState ParamLayout::unpack(const Vector& v) const {
    if (v.size() != size()) throw input_error("parameter vector length mismatch");
    ParamState s;
    Eigen::Index k = 0;
    s.beta = v.segment(k, p_);
    k += p_;
    s.phi = v.segment(k, n_phi_);
    k += n_phi_;
    if (has_family(model_.kernels, KernelFamily::TailUp)) { s.sigma_u = v(k++); s.alpha_u = v(k++); }
    if (has_family(model_.kernels, KernelFamily::TailDown)) { s.sigma_d = v(k++); s.alpha_d = v(k++); }
    if (has_family(model_.kernels, KernelFamily::Euclidean)) { s.sigma_e = v(k++); s.alpha_e = v(k++); }
    s.sigma_0 = v(k++);
    s.y_missing = v.segment(k, n_missing_);
    return s;
}

void SamplerConfig::validate() const {
    if (iter < 1 || chains < 1 || thin < 1 || warmup < 0) throw config_error("iter, chains and thin must be positive");
    if (warmup >= iter) throw config_error("warmup must be smaller than iter");
    if (threads < 1) throw config_error("threads must be positive");
    if (initial_scale < 0.0) throw config_error("initial proposal scale must be non-negative");
    if (target_accept < 0.0 || target_accept >= 1.0) throw config_error("target acceptance must lie in [0, 1)");
    if (adapt_window < 0) throw config_error("adaptation window must be non-negative");
}

int PosteriorDraws::n_chains() const {
    return chain.empty() ? 0 : *std::max_element(chain.begin(), chain.end());
}

Eigen::Index PosteriorDraws::column(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw input_error("draws have no parameter '" + name + "'");
    return it - names.begin();
}

std::vector<std::vector<double>> PosteriorDraws::by_chain(Eigen::Index col) const {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(n_chains()));
    for (Eigen::Index r = 0; r < size(); ++r) out[static_cast<std::size_t>(chain[static_cast<std::size_t>(r)] - 1)].push_back(values(r, col));
    return out;
}

void write_draws(std::ostream& out, const PosteriorDraws& draws) {
    std::vector<std::string> header{"chain", "iter"};
    header.insert(header.end(), draws.names.begin(), draws.names.end());
    header.push_back("lp");
    csv::write_row(out, header);
    for (Eigen::Index r = 0; r < draws.size(); ++r) {
        std::vector<std::string> cells{std::to_string(draws.chain[static_cast<std::size_t>(r)]),
                                       std::to_string(draws.iteration[static_cast<std::size_t>(r)])};
        for (Eigen::Index c = 0; c < draws.values.cols(); ++c) cells.push_back(csv::format(draws.values(r, c)));
        cells.push_back(csv::format(draws.lp(r)));
        csv::write_row(out, cells);
    }
}

PosteriorDraws read_draws(std::istream& in, const std::string& source) {
    const auto table = csv::read(in, source);
    if (table.header.size() < 3 || table.header[0] != "chain" || table.header[1] != "iter" || table.header.back() != "lp")
        throw input_error(source + ": draws header must be chain,iter,<params...>,lp");
    PosteriorDraws d;
    d.names.assign(table.header.begin() + 2, table.header.end() - 1);
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    d.values.resize(n, static_cast<Eigen::Index>(d.names.size()));
    d.lp.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = table.rows[static_cast<std::size_t>(r)];
        const std::string ctx = source + " row " + std::to_string(r + 1);
        d.chain.push_back(csv::to_int(row[0], ctx));
        d.iteration.push_back(csv::to_int(row[1], ctx));
        for (std::size_t c = 0; c < d.names.size(); ++c)
            d.values(r, static_cast<Eigen::Index>(c)) = csv::to_double(row[c + 2], ctx);
        d.lp(r) = csv::to_double(row.back(), ctx);
    }
    return d;
}

PosteriorDraws read_draws_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return read_draws(in, path);
}

double log_prior(const ParamState& s, const PriorSpec& prior, const ModelSpec& model) {
    double lp = 0.0;
    const double phi_width = prior.phi_upper - prior.phi_lower;
    for (Eigen::Index i = 0; i < s.phi.size(); ++i) {
        if (!(s.phi(i) > prior.phi_lower && s.phi(i) < prior.phi_upper)) return kNegInf;
        lp -= std::log(phi_width);
    }
    auto sd_term = [&](double sigma) {
        if (!(sigma >= 0.0 && sigma <= prior.sd_upper)) return kNegInf;
        return -std::log(prior.sd_upper);
    };
    auto range_term = [&](double alpha) {
        if (!(alpha > 0.0 && alpha <= prior.range_upper)) return kNegInf;
        return -std::log(prior.range_upper);
    };
    if (has_family(model.kernels, KernelFamily::TailUp)) lp += sd_term(s.sigma_u) + range_term(s.alpha_u);
    if (has_family(model.kernels, KernelFamily::TailDown)) lp += sd_term(s.sigma_d) + range_term(s.alpha_d);
    if (has_family(model.kernels, KernelFamily::Euclidean)) lp += sd_term(s.sigma_e) + range_term(s.alpha_e);
    lp += sd_term(s.sigma_0);
    for (Eigen::Index k = 0; k < s.beta.size(); ++k)
        lp += -0.5 * (kLog2Pi + std::log(prior.beta_var)) - 0.5 * s.beta(k) * s.beta(k) / prior.beta_var;
    return std::isnan(lp) ? kNegInf : lp;
}

Vector completed_response(const Panel& panel, const ParamState& state) {
    Vector y = panel.y;
    const auto rows = panel.missing_rows();
    if (static_cast<Eigen::Index>(rows.size()) != state.y_missing.size())
        throw config_error("imputed values do not match the missing entries");
    for (std::size_t k = 0; k < rows.size(); ++k) y(rows[k]) = state.y_missing(static_cast<Eigen::Index>(k));
    return y;
}

double log_likelihood(const Panel& panel, const ParamState& state, const ModelSpec& model,
                      const DistanceBundle& bundle) {
    const Vector phi = transition_diagonal(state.transition(model.mode), panel.S);
    const Vector r = completed_response(panel, state) - panel.X * state.beta;
    return loglik_residuals(r, panel.S, panel.T, phi, factor_innovation(model, state.spatial(), bundle));
}

Vector impute_missing(const Panel& panel, const ParamState& state, const ModelSpec& model,
                      const DistanceBundle& bundle, Rng& rng) {
    const Vector phi = transition_diagonal(state.transition(model.mode), panel.S);
    return impute_with(panel, state, factor_innovation(model, state.spatial(), bundle), phi, rng);
}

ParamState initial_state(const Panel& panel, const ModelSpec& model, const PriorSpec& prior) {
    const auto p = panel.X.cols();
    std::vector<Eigen::Index> observed;
    for (Eigen::Index r = 0; r < panel.rows(); ++r)
        if (!panel.missing[static_cast<std::size_t>(r)]) observed.push_back(r);
    const auto n = static_cast<Eigen::Index>(observed.size());

    ParamState s;
    s.beta = Vector::Zero(p);
    double resid_var = 1.0;
    if (n > 0) {
        Matrix Xo(n, p);
        Vector yo(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Xo.row(i) = panel.X.row(observed[static_cast<std::size_t>(i)]);
            yo(i) = panel.y(observed[static_cast<std::size_t>(i)]);
        }
        if (p > 0 && n >= p) s.beta = Xo.colPivHouseholderQr().solve(yo);
        if (n > p) resid_var = (yo - Xo * s.beta).squaredNorm() / static_cast<double>(n - p);
    }
    if (!(resid_var > 0.0) || !std::isfinite(resid_var)) resid_var = 1.0;

    const int components = 1 + static_cast<int>(model.kernels.size());
    const double sigma = std::clamp(std::sqrt(resid_var / components), 1e-3 * prior.sd_upper, 0.5 * prior.sd_upper);
    const double range = 0.1 * prior.range_upper;
    s.phi = Vector::Zero(model.mode == TemporalMode::AR ? 1 : panel.S);
    if (has_family(model.kernels, KernelFamily::TailUp)) { s.sigma_u = sigma; s.alpha_u = range; }
    if (has_family(model.kernels, KernelFamily::TailDown)) { s.sigma_d = sigma; s.alpha_d = range; }
    if (has_family(model.kernels, KernelFamily::Euclidean)) { s.sigma_e = sigma; s.alpha_e = range; }
    s.sigma_0 = sigma;
    const Vector fitted = panel.X * s.beta;
    const auto rows = panel.missing_rows();
    s.y_missing.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) s.y_missing(static_cast<Eigen::Index>(k)) = fitted(rows[k]);
    return s;
}

PosteriorDraws fit(const Panel& panel, const ModelSpec& model, const DistanceBundle& bundle, const PriorSpec& prior,
                   const SamplerConfig& config) {
    config.validate();
    prior.validate();
    validate_kernels(model.kernels);
    if (model.kernels.empty()) throw config_error("at least one kernel is required");
    if (bundle.rows() != panel.S || bundle.cols() != panel.S || !bundle.same_sites)
        throw config_error("distance bundle does not match the panel's sites");

    const ParamLayout layout(model, panel);
    std::vector<ChainResult> results(static_cast<std::size_t>(config.chains));
    std::mutex report_mutex;
    auto report = [&](const std::string& msg) {
        std::lock_guard lock(report_mutex);
        if (config.progress) config.progress(msg);
    };

    std::vector<std::exception_ptr> errors(results.size());
    auto work = [&](int c) {
        try {
            results[static_cast<std::size_t>(c)] = run_chain(c, panel, model, bundle, prior, config, layout, report);
        } catch (...) {
            errors[static_cast<std::size_t>(c)] = std::current_exception();
        }
    };
    const int workers = std::min(config.threads, config.chains);
    if (workers <= 1) {
        for (int c = 0; c < config.chains; ++c) work(c);
    } else {
        for (int first = 0; first < config.chains; first += workers) {
            std::vector<std::thread> pool;
            for (int c = first; c < std::min(first + workers, config.chains); ++c) pool.emplace_back(work, c);
            for (auto& t : pool) t.join();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    PosteriorDraws draws;
    draws.names = layout.names();
    draws.block_names = {};
    const Transform transform(model, panel.X.cols(), model.mode == TemporalMode::AR ? 1 : panel.S, prior);
    for (const auto& b : transform.blocks()) draws.block_names.push_back(b.name);
    const Eigen::Index per_chain = results.front().values.rows();
    draws.values.resize(per_chain * config.chains, layout.size());
    draws.lp.resize(per_chain * config.chains);
    for (int c = 0; c < config.chains; ++c) {
        const auto& r = results[static_cast<std::size_t>(c)];
        draws.values.middleRows(c * per_chain, per_chain) = r.values;
        draws.lp.segment(c * per_chain, per_chain) = r.lp;
        for (Eigen::Index i = 0; i < per_chain; ++i) {
            draws.chain.push_back(c + 1);
            draws.iteration.push_back(static_cast<int>(i) + 1);
        }
        draws.acceptance.push_back(r.acceptance);
    }
    return draws;
}

std::vector<ParamSummary> summarize_draws(const PosteriorDraws& draws) {
    if (draws.size() == 0) throw input_error("no draws to summarize");
    std::vector<ParamSummary> out;
    for (Eigen::Index c = 0; c < draws.values.cols(); ++c) {
        ParamSummary s;
        s.name = draws.names[static_cast<std::size_t>(c)];
        std::vector<double> all(draws.values.col(c).data(), draws.values.col(c).data() + draws.size());
        s.mean = stats::mean(all);
        s.sd = stats::sd(all);
        std::sort(all.begin(), all.end());
        s.q025 = stats::quantile_sorted(all, 0.025);
        s.q50 = stats::quantile_sorted(all, 0.5);
        s.q975 = stats::quantile_sorted(all, 0.975);
        const auto chains = draws.by_chain(c);
        const bool enough = std::all_of(chains.begin(), chains.end(), [](const auto& v) { return v.size() >= 4; });
        s.rhat = enough ? stats::split_rhat(chains) : std::numeric_limits<double>::quiet_NaN();
        s.ess = enough ? stats::effective_sample_size(chains) : std::numeric_limits<double>::quiet_NaN();
        out.push_back(s);
    }
    return out;
}

void write_summary(std::ostream& out, const std::vector<ParamSummary>& summary) {
    csv::write_row(out, {"param", "mean", "sd", "q2.5", "q50", "q97.5", "rhat", "ess"});
    for (const auto& s : summary)
        csv::write_row(out, {s.name, csv::format(s.mean), csv::format(s.sd), csv::format(s.q025), csv::format(s.q50),
                             csv::format(s.q975), csv::format(s.rhat), csv::format(s.ess)});
}

}  // namespace streamst
