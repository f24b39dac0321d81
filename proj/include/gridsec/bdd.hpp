#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/estimator.hpp"
#include "gridsec/measurement.hpp"
#include "gridsec/network.hpp"

namespace gridsec {

inline constexpr double kDefaultTau = 3.0;
/// Rows whose normalized residual variance falls below this are critical.
inline constexpr double kCriticalVarianceFloor = 1e-8;

/// S = I - H (H'WH)^-1 H'W. Throws NotObservable when H is column rank deficient.
Eigen::MatrixXd residual_sensitivity(const Eigen::MatrixXd& h, const Eigen::VectorXd& weights);

struct NormalizedResiduals {
    Eigen::VectorXd rn;          ///< zero on excluded rows
    Eigen::VectorXd omega_diag;  ///< diag of the residual covariance S W^-1
    std::vector<bool> included;  ///< eligible for the LNR test
    std::vector<std::size_t> critical;  ///< rows with no redundancy
};

/// r_N = D^-1/2 r with D = diag(S W^-1). Rows flagged in `excluded` (pseudo
/// rows) and critical rows are left out of the test.
NormalizedResiduals normalized_residuals(const Eigen::VectorXd& r, const Eigen::MatrixXd& s,
                                         const Eigen::VectorXd& weights, const std::vector<bool>& excluded = {});

struct LnrResult {
    bool alarm = false;
    std::optional<std::size_t> max_index;
    double max_value = 0.0;  ///< largest |r_N| over included rows
};

/// Alarm iff max |r_N| over included rows exceeds tau.
LnrResult lnr_test(const Eigen::VectorXd& rn, const std::vector<bool>& included, double tau);

/// Bonferroni-corrected two-sided threshold Phi^-1(1 - p / (2 m_eff)).
double threshold_from_false_alarm(double p, std::size_t m_eff);

struct ResidualAnalysis {
    Eigen::MatrixXd s;
    Eigen::MatrixXd omega;
    Eigen::VectorXd d;
    Eigen::VectorXd rn;
    std::vector<bool> included;
    std::vector<std::size_t> critical;
    double tau = kDefaultTau;
    std::optional<std::size_t> max_index;
    double max_value = 0.0;
    bool alarm = false;
};

/// Full LNR pass on a converged estimate: H at x_hat, pseudo rows excluded.
ResidualAnalysis analyze_residuals(const Network& network, const MeasurementSet& set, const EstimationResult& result,
                                   double tau = kDefaultTau, double pseudo_weight = EstimatorConfig{}.pseudo_weight);

}  // namespace gridsec
