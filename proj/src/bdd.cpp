#include "gridsec/bdd.hpp"

#include <cmath>

#include <boost/math/distributions/normal.hpp>

#include "gridsec/error.hpp"
#include "gridsec/linalg.hpp"

namespace gridsec {

Eigen::MatrixXd residual_sensitivity(const Eigen::MatrixXd& h, const Eigen::VectorXd& weights) {
    if (weights.size() != h.rows()) throw PreconditionError("weight vector does not match H");
    if (numerical_rank(h) < h.cols()) throw NotObservable("H is not full column rank");
    const Eigen::MatrixXd hw = h.transpose() * weights.asDiagonal();
    const Eigen::MatrixXd gain = hw * h;
    const Eigen::MatrixXd hat = h * gain.ldlt().solve(hw);
    return Eigen::MatrixXd::Identity(h.rows(), h.rows()) - hat;
}

NormalizedResiduals normalized_residuals(const Eigen::VectorXd& r, const Eigen::MatrixXd& s,
                                         const Eigen::VectorXd& weights, const std::vector<bool>& excluded) {
    const Eigen::Index m = r.size();
    NormalizedResiduals out;
    out.rn = Eigen::VectorXd::Zero(m);
    out.omega_diag = Eigen::VectorXd(m);
    out.included.assign(static_cast<std::size_t>(m), false);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        out.omega_diag(k) = s(k, k) / weights(k);
        if (!excluded.empty() && excluded[ku]) continue;
        if (s(k, k) < kCriticalVarianceFloor) {
            out.critical.push_back(ku);
            continue;
        }
        out.included[ku] = true;
        out.rn(k) = r(k) / std::sqrt(out.omega_diag(k));
    }
    return out;
}

LnrResult lnr_test(const Eigen::VectorXd& rn, const std::vector<bool>& included, double tau) {
    LnrResult out;
    for (Eigen::Index k = 0; k < rn.size(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (!included.empty() && !included[ku]) continue;
        const double value = std::abs(rn(k));
        if (!out.max_index || value > out.max_value) {
            out.max_index = ku;
            out.max_value = value;
        }
    }
    out.alarm = out.max_index.has_value() && out.max_value > tau;
    return out;
}

double threshold_from_false_alarm(double p, std::size_t m_eff) {
    if (!(p > 0.0 && p < 1.0)) throw PreconditionError("false alarm probability must lie in (0, 1)");
    if (m_eff == 0) throw PreconditionError("m_eff must be positive");
    const boost::math::normal standard;
    return boost::math::quantile(standard, 1.0 - p / (2.0 * static_cast<double>(m_eff)));
}

ResidualAnalysis analyze_residuals(const Network& network, const MeasurementSet& set, const EstimationResult& result,
                                   double tau, double pseudo_weight) {
    const Eigen::VectorXd w = measurement_weights(set, pseudo_weight);
    const Eigen::MatrixXd h = eval_jacobian(network, set, result.x_hat).full;

    ResidualAnalysis out;
    out.tau = tau;
    out.s = residual_sensitivity(h, w);
    out.omega = out.s * w.cwiseInverse().asDiagonal();
    out.d = out.omega.diagonal();

    std::vector<bool> pseudo(set.size(), false);
    for (std::size_t k : set.pseudo_indices()) pseudo[k] = true;
    NormalizedResiduals nr = normalized_residuals(result.residual, out.s, w, pseudo);
    out.rn = std::move(nr.rn);
    out.included = std::move(nr.included);
    out.critical = std::move(nr.critical);

    const LnrResult lnr = lnr_test(out.rn, out.included, tau);
    out.max_index = lnr.max_index;
    out.max_value = lnr.max_value;
    out.alarm = lnr.alarm;
    return out;
}

}  // namespace gridsec
