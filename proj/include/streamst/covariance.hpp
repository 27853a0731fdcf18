#pragma once

#include <string>
#include <vector>

#include "streamst/network.hpp"
#include "streamst/types.hpp"

namespace streamst {

enum class KernelFamily { TailUp, TailDown, Euclidean };
enum class KernelShape { Exponential, LinearWithSill, Spherical, Gaussian };

struct KernelSpec {
    KernelFamily family = KernelFamily::TailDown;
    KernelShape shape = KernelShape::Exponential;

    bool operator==(const KernelSpec&) const = default;
};

/// Parses names such as "Exponential.taildown", "LinearSill.tailup" or "Gaussian.Euclid".
KernelSpec parse_kernel(const std::string& name);
std::string kernel_name(const KernelSpec& spec);
/// Rejects duplicate families and shape/family combinations that have no kernel.
void validate_kernels(const std::vector<KernelSpec>& specs);
bool has_family(const std::vector<KernelSpec>& specs, KernelFamily family);

/// Partial sills and ranges; sigma2_0 is the nugget.
struct SpatialParams {
    double sigma2_u = 0.0, alpha_u = 1.0;
    double sigma2_d = 0.0, alpha_d = 1.0;
    double sigma2_e = 0.0, alpha_e = 1.0;
    double sigma2_0 = 0.0;
};

/// Unweighted kernel C(h) for a single distance.
double kernel_value(KernelShape shape, double h, double sigma2, double alpha);
/// Tail-down value for a flow-unconnected pair at junction distances a <= b.
double taildown_unconnected(KernelShape shape, double a, double b, double sigma2, double alpha);

Matrix euclid_cov(const Matrix& E, KernelShape shape, double sigma2_e, double alpha_e);
Matrix tailup_cov(const Matrix& H, const Matrix& W, const Matrix& flow_con, KernelShape shape, double sigma2_u,
                  double alpha_u);
/// D and D_col hold each pair's distances to the common junction (D_col = D' for a square bundle).
Matrix taildown_cov(const Matrix& D, const Matrix& D_col, const Matrix& H, const Matrix& flow_con, KernelShape shape,
                    double sigma2_d, double alpha_d);

/// Sum of the selected components; the nugget goes on the diagonal only for a
/// bundle whose rows and columns are the same sites.
Matrix mixture_cov(const std::vector<KernelSpec>& specs, const SpatialParams& params, const DistanceBundle& bundle,
                   bool add_nugget);

}  // namespace streamst
