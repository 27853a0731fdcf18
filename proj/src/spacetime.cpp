#include "streamst/spacetime.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <unordered_map>

#include "streamst/csv.hpp"
#include "streamst/error.hpp"

namespace streamst {

namespace {

void check_stationary(const Vector& phi) {
    for (Eigen::Index i = 0; i < phi.size(); ++i)
        if (!(std::abs(phi(i)) < 1.0)) throw config_error("autoregressive parameter outside (-1, 1): nonstationary");
}

Vector diagonal_of(const Matrix& Phi) {
    if (Phi.rows() != Phi.cols()) throw config_error("transition matrix must be square");
    Matrix off = Phi;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() > 0.0) throw config_error("transition matrix must be diagonal");
    return Phi.diagonal();
}

}  // namespace

TransitionSpec TransitionSpec::ar(double phi) { return {TemporalMode::AR, Vector::Constant(1, phi)}; }

TransitionSpec TransitionSpec::var(Vector phi) { return {TemporalMode::VAR, std::move(phi)}; }

Vector transition_diagonal(const TransitionSpec& spec, Eigen::Index S) {
    check_stationary(spec.phi);
    if (spec.mode == TemporalMode::AR) {
        if (spec.phi.size() != 1) throw config_error("AR transition takes a single phi");
        return Vector::Constant(S, spec.phi(0));
    }
    if (spec.phi.size() != S)
        throw config_error("VAR transition needs one phi per location: got " + std::to_string(spec.phi.size()) +
                           " for " + std::to_string(S) + " locations");
    return spec.phi;
}

Matrix build_transition(const TransitionSpec& spec, Eigen::Index S) {
    return transition_diagonal(spec, S).asDiagonal();
}

Vector conditional_mean(const Matrix& X_t, const Matrix& X_tm1, const Vector& y_tm1, const Vector& beta,
                        const Matrix& Phi) {
    if (X_t.cols() != beta.size() || X_tm1.cols() != beta.size() || X_t.rows() != X_tm1.rows() ||
        y_tm1.size() != X_tm1.rows() || Phi.rows() != X_t.rows() || Phi.cols() != X_t.rows())
        throw config_error("conditional_mean: shape mismatch");
    return X_t * beta + Phi * (y_tm1 - X_tm1 * beta);
}

Matrix innovation_cov(const Matrix& Sigma, double sigma2_0) {
    Matrix Q = Sigma;
    Q.diagonal().array() += sigma2_0;
    return Q;
}

Matrix temporal_cov(double phi, Eigen::Index T) {
    if (!(std::abs(phi) < 1.0)) throw config_error("autoregressive parameter outside (-1, 1): nonstationary");
    Matrix out(T, T);
    const double scale = 1.0 / (1.0 - phi * phi);
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index u = 0; u < T; ++u)
            out(t, u) = std::pow(phi, static_cast<double>(std::abs(t - u))) * scale;
    return out;
}

Matrix stationary_cov(const Matrix& Phi, const Matrix& Q) {
    const Vector phi = diagonal_of(Phi);
    check_stationary(phi);
    if (Q.rows() != phi.size() || Q.cols() != phi.size()) throw config_error("stationary_cov: shape mismatch");
    Matrix V(Q.rows(), Q.cols());
    for (Eigen::Index j = 0; j < Q.cols(); ++j)
        for (Eigen::Index i = 0; i < Q.rows(); ++i) V(i, j) = Q(i, j) / (1.0 - phi(i) * phi(j));
    return V;
}

Matrix spacetime_cross_cov(const Vector& phi_row, const Vector& phi_col, const Matrix& Q_cross, Eigen::Index T) {
    check_stationary(phi_row);
    check_stationary(phi_col);
    const Eigen::Index R = Q_cross.rows();
    const Eigen::Index C = Q_cross.cols();
    if (phi_row.size() != R || phi_col.size() != C) throw config_error("spacetime_cross_cov: shape mismatch");
    Matrix V(R, C);
    for (Eigen::Index j = 0; j < C; ++j)
        for (Eigen::Index i = 0; i < R; ++i) V(i, j) = Q_cross(i, j) / (1.0 - phi_row(i) * phi_col(j));

    // Powers phi^k for k = 0..T-1, per location.
    Matrix row_pow(R, T), col_pow(C, T);
    row_pow.col(0).setOnes();
    col_pow.col(0).setOnes();
    for (Eigen::Index k = 1; k < T; ++k) {
        row_pow.col(k) = row_pow.col(k - 1).cwiseProduct(phi_row);
        col_pow.col(k) = col_pow.col(k - 1).cwiseProduct(phi_col);
    }
    Matrix out(R * T, C * T);
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index u = 0; u < T; ++u) {
            auto block = out.block(t * R, u * C, R, C);
            if (u >= t)
                block = V * col_pow.col(u - t).asDiagonal();
            else
                block = row_pow.col(t - u).asDiagonal() * V;
        }
    return out;
}

Matrix joint_spacetime_cov(const Matrix& Phi, const Matrix& Q, Eigen::Index T) {
    const Vector phi = diagonal_of(Phi);
    if (Q.rows() != phi.size() || Q.cols() != phi.size()) throw config_error("joint_spacetime_cov: shape mismatch");
    Matrix out = spacetime_cross_cov(phi, phi, Q, T);
    return 0.5 * (out + out.transpose());
}

KronInverse::KronInverse(const Matrix& Q, const Matrix& Sigma_var)
    : q_llt_(Q), var_llt_(Sigma_var), S_(Q.rows()), T_(Sigma_var.rows()) {
    if (q_llt_.info() != Eigen::Success) throw numeric_error("spatial factor is not positive definite");
    if (var_llt_.info() != Eigen::Success) throw numeric_error("temporal factor is not positive definite");
}

Vector KronInverse::apply(const Vector& v) const {
    if (v.size() != S_ * T_) throw config_error("KronInverse: vector length mismatch");
    const Eigen::Map<const Matrix> M(v.data(), S_, T_);
    const Matrix left = q_llt_.solve(M);                          // Q^{-1} M
    const Matrix both = var_llt_.solve(left.transpose()).transpose();  // Q^{-1} M Sigma_var^{-1}
    return Eigen::Map<const Vector>(both.data(), S_ * T_);
}

Matrix KronInverse::apply(const Matrix& M) const {
    Matrix out(M.rows(), M.cols());
    for (Eigen::Index c = 0; c < M.cols(); ++c) out.col(c) = apply(Vector(M.col(c)));
    return out;
}

Vector kron_apply(const Matrix& A, const Matrix& B, const Vector& v) {
    if (v.size() != A.cols() * B.cols()) throw config_error("kron_apply: vector length mismatch");
    const Eigen::Map<const Matrix> M(v.data(), B.cols(), A.cols());
    const Matrix out = B * M * A.transpose();
    return Eigen::Map<const Vector>(out.data(), out.size());
}

std::vector<Eigen::Index> Panel::missing_rows() const {
    std::vector<Eigen::Index> out;
    for (Eigen::Index r = 0; r < rows(); ++r)
        if (missing[static_cast<std::size_t>(r)]) out.push_back(r);
    return out;
}

Panel read_panel(std::istream& in, const PanelColumns& columns, const SiteSet& sites, const std::string& source) {
    const auto table = csv::read(in, source);
    const auto c_loc = table.column("locID"), c_pid = table.column("pid"), c_time = table.column("time");
    std::optional<std::size_t> c_resp;
    if (columns.response) c_resp = table.column(*columns.response);
    std::vector<std::size_t> c_cov;
    for (const auto& name : columns.covariates) c_cov.push_back(table.column(name));

    std::unordered_map<int, Eigen::Index> site_pos;
    for (std::size_t i = 0; i < sites.size(); ++i) site_pos[sites[i].locID] = static_cast<Eigen::Index>(i);

    std::map<int, Eigen::Index> time_pos;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        time_pos[csv::to_int(table.rows[r][c_time], source + " row " + std::to_string(r + 1))] = 0;
    if (time_pos.empty()) throw input_error(source + ": no rows");
    Eigen::Index next = 0;
    int expected = time_pos.begin()->first;
    for (auto& [time, pos] : time_pos) {
        if (time != expected) throw input_error(source + ": time index is not regular (consecutive integers)");
        pos = next++;
        ++expected;
    }

    Panel p;
    p.S = static_cast<Eigen::Index>(sites.size());
    p.T = next;
    for (const auto& s : sites) p.locIDs.push_back(s.locID);
    for (const auto& [time, pos] : time_pos) p.times.push_back(time);
    p.covariate_names = columns.covariates;
    const Eigen::Index n_cols = static_cast<Eigen::Index>(c_cov.size()) + (columns.intercept ? 1 : 0);
    p.X = Matrix::Zero(p.rows(), n_cols);
    p.y = Vector::Constant(p.rows(), std::numeric_limits<double>::quiet_NaN());
    p.missing.assign(static_cast<std::size_t>(p.rows()), !columns.response.has_value());
    p.pid.assign(static_cast<std::size_t>(p.rows()), 0);
    std::vector<bool> seen(static_cast<std::size_t>(p.rows()), false);

    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string ctx = source + " row " + std::to_string(r + 1);
        const int loc = csv::to_int(row[c_loc], ctx);
        auto it = site_pos.find(loc);
        if (it == site_pos.end()) throw input_error(ctx + ": locID " + std::to_string(loc) + " is not in the site set");
        const Eigen::Index idx = p.index(it->second, time_pos.at(csv::to_int(row[c_time], ctx)));
        const auto u = static_cast<std::size_t>(idx);
        if (seen[u]) throw input_error(ctx + ": duplicate (locID, time)");
        seen[u] = true;
        p.pid[u] = csv::to_int(row[c_pid], ctx);
        Eigen::Index col = 0;
        if (columns.intercept) p.X(idx, col++) = 1.0;
        for (std::size_t k = 0; k < c_cov.size(); ++k) {
            const auto value = csv::to_optional_double(row[c_cov[k]], ctx);
            if (!value) throw input_error(ctx + ": missing covariate '" + columns.covariates[k] + "'");
            p.X(idx, col++) = *value;
        }
        if (c_resp) {
            const auto value = csv::to_optional_double(row[*c_resp], ctx);
            p.missing[u] = !value.has_value();
            if (value) p.y(idx) = *value;
        }
    }
    for (std::size_t u = 0; u < seen.size(); ++u)
        if (!seen[u])
            throw input_error(source + ": location " + std::to_string(p.locIDs[u % sites.size()]) +
                              " does not have one row per time point");
    return p;
}

Panel read_panel_file(const std::string& path, const PanelColumns& columns, const SiteSet& sites) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'");
    return read_panel(in, columns, sites, path);
}

void write_panel(std::ostream& out, const Panel& panel, const std::string& response_name, bool with_response) {
    std::vector<std::string> header{"locID", "pid", "time"};
    if (with_response) header.push_back(response_name);
    for (const auto& c : panel.covariate_names) header.push_back(c);
    csv::write_row(out, header);
    const Eigen::Index offset = panel.X.cols() - static_cast<Eigen::Index>(panel.covariate_names.size());
    for (Eigen::Index t = 0; t < panel.T; ++t)
        for (Eigen::Index s = 0; s < panel.S; ++s) {
            const Eigen::Index r = panel.index(s, t);
            const auto u = static_cast<std::size_t>(r);
            std::vector<std::string> cells{std::to_string(panel.locIDs[static_cast<std::size_t>(s)]),
                                           std::to_string(panel.pid[u]),
                                           std::to_string(panel.times[static_cast<std::size_t>(t)])};
            if (with_response) cells.push_back(panel.missing[u] ? std::string{} : csv::format(panel.y(r)));
            for (Eigen::Index k = offset; k < panel.X.cols(); ++k) cells.push_back(csv::format(panel.X(r, k)));
            csv::write_row(out, cells);
        }
}

}  // namespace streamst
