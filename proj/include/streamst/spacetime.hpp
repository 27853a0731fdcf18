#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "streamst/network.hpp"
#include "streamst/types.hpp"

namespace streamst {

enum class TemporalMode { AR, VAR };

/// Diagonal VAR(1) transition: a shared phi (AR) or one phi per location (VAR).
struct TransitionSpec {
    TemporalMode mode = TemporalMode::AR;
    Vector phi = Vector::Zero(1);

    static TransitionSpec ar(double phi);
    static TransitionSpec var(Vector phi);
};

/// Diagonal of the transition matrix for S locations.
Vector transition_diagonal(const TransitionSpec& spec, Eigen::Index S);
Matrix build_transition(const TransitionSpec& spec, Eigen::Index S);

/// X_t beta + Phi (y_{t-1} - X_{t-1} beta).
Vector conditional_mean(const Matrix& X_t, const Matrix& X_tm1, const Vector& y_tm1, const Vector& beta,
                        const Matrix& Phi);

/// Sigma + sigma2_0 I.
Matrix innovation_cov(const Matrix& Sigma, double sigma2_0);

/// Stationary AR(1) temporal covariance, entry phi^|t-t'| / (1 - phi^2).
Matrix temporal_cov(double phi, Eigen::Index T);

/// Solution of V = Phi V Phi' + Q for diagonal Phi: V_ij = Q_ij / (1 - phi_i phi_j).
Matrix stationary_cov(const Matrix& Phi, const Matrix& Q);

/// Covariance between a row process and a column process sharing innovations
/// `Q_cross`, stacked time-major. Entry ((t,i),(t',j)) is
/// V_ij phi_col_j^(t'-t) for t' >= t and V_ij phi_row_i^(t-t') otherwise.
Matrix spacetime_cross_cov(const Vector& phi_row, const Vector& phi_col, const Matrix& Q_cross, Eigen::Index T);

/// Dense (S*T) x (S*T) covariance of the stationary VAR(1) process, time-major.
Matrix joint_spacetime_cov(const Matrix& Phi, const Matrix& Q, Eigen::Index T);

/// Applies (Sigma_var ⊗ Q)^{-1} to time-major vectors through two small
/// Cholesky solves, without forming the S*T inverse.
class KronInverse {
public:
    KronInverse(const Matrix& Q, const Matrix& Sigma_var);

    Eigen::Index spatial_size() const { return S_; }
    Eigen::Index temporal_size() const { return T_; }

    Vector apply(const Vector& v) const;
    /// Column-wise application.
    Matrix apply(const Matrix& M) const;

private:
    Eigen::LLT<Matrix> q_llt_;
    Eigen::LLT<Matrix> var_llt_;
    Eigen::Index S_ = 0;
    Eigen::Index T_ = 0;
};

/// (A ⊗ B) v for time-major v, with A temporal (T x T') and B spatial (S x S').
Vector kron_apply(const Matrix& A, const Matrix& B, const Vector& v);

/// Long-format space-time data on a fixed site ordering. Row r = t*S + s.
struct Panel {
    Eigen::Index S = 0;
    Eigen::Index T = 0;
    std::vector<int> locIDs;  ///< per site, matching the site set order
    std::vector<int> times;   ///< consecutive time values, size T
    std::vector<int> pid;     ///< per row
    std::vector<std::string> covariate_names;
    Matrix X;                    ///< (S*T) x p
    Vector y;                    ///< (S*T); NaN where missing
    std::vector<bool> missing;   ///< per row

    Eigen::Index rows() const { return S * T; }
    Eigen::Index index(Eigen::Index site, Eigen::Index t) const { return t * S + site; }
    std::vector<Eigen::Index> missing_rows() const;
    Matrix X_at(Eigen::Index t) const { return X.middleRows(t * S, S); }
};

struct PanelColumns {
    std::optional<std::string> response;  ///< absent for prediction data
    std::vector<std::string> covariates;
    bool intercept = true;
};

/// Reads `locID,pid,time,<response>,<covariates...>`. Rows are arranged to
/// follow `sites`; every site needs one row per time point.
Panel read_panel(std::istream& in, const PanelColumns& columns, const SiteSet& sites,
                 const std::string& source = "<panel>");
Panel read_panel_file(const std::string& path, const PanelColumns& columns, const SiteSet& sites);
void write_panel(std::ostream& out, const Panel& panel, const std::string& response_name, bool with_response);

}  // namespace streamst
