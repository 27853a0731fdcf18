#include "streamst/covariance.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "streamst/error.hpp"

namespace streamst {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

void check_range(double sigma2, double alpha) {
    if (sigma2 < 0.0 || !std::isfinite(sigma2)) throw config_error("partial sill must be non-negative");
    if (sigma2 > 0.0 && !(alpha > 0.0)) throw config_error("range must be positive when the partial sill is non-zero");
}

}  // namespace

KernelSpec parse_kernel(const std::string& name) {
    const auto dot = name.find('.');
    if (dot == std::string::npos) throw config_error("kernel '" + name + "' must look like Shape.family");
    const auto shape = lower(name.substr(0, dot));
    const auto family = lower(name.substr(dot + 1));
    KernelSpec spec;
    if (family == "tailup") spec.family = KernelFamily::TailUp;
    else if (family == "taildown") spec.family = KernelFamily::TailDown;
    else if (family == "euclid" || family == "euclidean") spec.family = KernelFamily::Euclidean;
    else throw config_error("unknown kernel family '" + family + "'");
    if (shape == "exponential") spec.shape = KernelShape::Exponential;
    else if (shape == "linearsill" || shape == "linear_with_sill") spec.shape = KernelShape::LinearWithSill;
    else if (shape == "spherical") spec.shape = KernelShape::Spherical;
    else if (shape == "gaussian") spec.shape = KernelShape::Gaussian;
    else throw config_error("unknown kernel shape '" + shape + "'");
    validate_kernels({spec});
    return spec;
}

std::string kernel_name(const KernelSpec& spec) {
    std::string shape;
    switch (spec.shape) {
        case KernelShape::Exponential: shape = "Exponential"; break;
        case KernelShape::LinearWithSill: shape = "LinearSill"; break;
        case KernelShape::Spherical: shape = "Spherical"; break;
        case KernelShape::Gaussian: shape = "Gaussian"; break;
    }
    switch (spec.family) {
        case KernelFamily::TailUp: return shape + ".tailup";
        case KernelFamily::TailDown: return shape + ".taildown";
        case KernelFamily::Euclidean: return shape + ".Euclid";
    }
    return shape;
}

void validate_kernels(const std::vector<KernelSpec>& specs) {
    bool seen[3] = {false, false, false};
    for (const auto& s : specs) {
        auto& flag = seen[static_cast<int>(s.family)];
        if (flag) throw config_error("duplicate kernel family in mixture: " + kernel_name(s));
        flag = true;
        if (s.shape == KernelShape::Gaussian && s.family != KernelFamily::Euclidean)
            throw config_error("gaussian shape is only available for the Euclidean family");
        // The triangular kernel is not positive definite in two dimensions.
        if (s.shape == KernelShape::LinearWithSill && s.family == KernelFamily::Euclidean)
            throw config_error("linear-with-sill shape is not available for the Euclidean family");
    }
}

bool has_family(const std::vector<KernelSpec>& specs, KernelFamily family) {
    return std::any_of(specs.begin(), specs.end(), [&](const KernelSpec& s) { return s.family == family; });
}

double kernel_value(KernelShape shape, double h, double sigma2, double alpha) {
    if (sigma2 == 0.0) return 0.0;
    const double r = h / alpha;
    switch (shape) {
        case KernelShape::Exponential: return sigma2 * std::exp(-3.0 * r);
        case KernelShape::Gaussian: return sigma2 * std::exp(-3.0 * r * r);
        case KernelShape::LinearWithSill: return r <= 1.0 ? sigma2 * (1.0 - r) : 0.0;
        case KernelShape::Spherical: return r <= 1.0 ? sigma2 * (1.0 - 1.5 * r + 0.5 * r * r * r) : 0.0;
    }
    return 0.0;
}

double taildown_unconnected(KernelShape shape, double a, double b, double sigma2, double alpha) {
    if (sigma2 == 0.0) return 0.0;
    if (a > b) std::swap(a, b);
    const double ra = a / alpha;
    const double rb = b / alpha;
    switch (shape) {
        case KernelShape::Exponential: return sigma2 * std::exp(-3.0 * (ra + rb));
        case KernelShape::LinearWithSill: return rb <= 1.0 ? sigma2 * (1.0 - rb) : 0.0;
        case KernelShape::Spherical:
            return rb <= 1.0 ? sigma2 * (1.0 - 1.5 * ra + 0.5 * rb) * (1.0 - rb) * (1.0 - rb) : 0.0;
        case KernelShape::Gaussian: break;
    }
    throw config_error("gaussian shape is only available for the Euclidean family");
}

Matrix euclid_cov(const Matrix& E, KernelShape shape, double sigma2_e, double alpha_e) {
    check_range(sigma2_e, alpha_e);
    if (shape == KernelShape::LinearWithSill)
        throw config_error("linear-with-sill shape is not available for the Euclidean family");
    return E.unaryExpr([&](double d) { return kernel_value(shape, d, sigma2_e, alpha_e); });
}

Matrix tailup_cov(const Matrix& H, const Matrix& W, const Matrix& flow_con, KernelShape shape, double sigma2_u,
                  double alpha_u) {
    check_range(sigma2_u, alpha_u);
    if (shape == KernelShape::Gaussian) throw config_error("gaussian shape is only available for the Euclidean family");
    Matrix out = Matrix::Zero(H.rows(), H.cols());
    for (Eigen::Index j = 0; j < H.cols(); ++j)
        for (Eigen::Index i = 0; i < H.rows(); ++i)
            if (flow_con(i, j) != 0.0) out(i, j) = W(i, j) * kernel_value(shape, H(i, j), sigma2_u, alpha_u);
    return out;
}

Matrix taildown_cov(const Matrix& D, const Matrix& D_col, const Matrix& H, const Matrix& flow_con, KernelShape shape,
                    double sigma2_d, double alpha_d) {
    check_range(sigma2_d, alpha_d);
    if (shape == KernelShape::Gaussian) throw config_error("gaussian shape is only available for the Euclidean family");
    Matrix out(H.rows(), H.cols());
    for (Eigen::Index j = 0; j < H.cols(); ++j)
        for (Eigen::Index i = 0; i < H.rows(); ++i)
            out(i, j) = flow_con(i, j) != 0.0 ? kernel_value(shape, H(i, j), sigma2_d, alpha_d)
                                              : taildown_unconnected(shape, D(i, j), D_col(i, j), sigma2_d, alpha_d);
    return out;
}

Matrix mixture_cov(const std::vector<KernelSpec>& specs, const SpatialParams& params, const DistanceBundle& bundle,
                   bool add_nugget) {
    if (specs.empty()) throw config_error("at least one kernel is required");
    validate_kernels(specs);
    Matrix out = Matrix::Zero(bundle.rows(), bundle.cols());
    for (const auto& s : specs) {
        switch (s.family) {
            case KernelFamily::TailUp:
                out += tailup_cov(bundle.H, bundle.W, bundle.flow_con, s.shape, params.sigma2_u, params.alpha_u);
                break;
            case KernelFamily::TailDown:
                out += taildown_cov(bundle.D, bundle.D_col, bundle.H, bundle.flow_con, s.shape, params.sigma2_d,
                                    params.alpha_d);
                break;
            case KernelFamily::Euclidean:
                out += euclid_cov(bundle.E, s.shape, params.sigma2_e, params.alpha_e);
                break;
        }
    }
    if (bundle.same_sites) {
        out = (0.5 * (out + out.transpose())).eval();
        if (add_nugget) {
            if (params.sigma2_0 < 0.0) throw config_error("nugget must be non-negative");
            out.diagonal().array() += params.sigma2_0;
        }
    }
    return out;
}

}  // namespace streamst
