#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/error.hpp"
#include "gridsec/measurement.hpp"
#include "gridsec/network.hpp"

namespace gridsec {

enum class EstimatorMode { FullNewton, FastDecoupled };

struct EstimatorConfig {
    int max_iterations = 50;
    double convergence_tol = 1e-6;  ///< on the infinity norm of the state step
    double pseudo_weight = 1e6;     ///< weight multiplier for pseudo-measurement rows
    EstimatorMode mode = EstimatorMode::FullNewton;
    std::optional<StateVector> start;  ///< flat start when empty

    /// Throws PreconditionError for out-of-range fields.
    void validate() const;
};

struct IterationRecord {
    double step_norm = 0.0;  ///< infinity norm of the step
    double objective = 0.0;  ///< J at the iterate the step was taken from
    /// grad J . dx at that iterate; negative for a descent direction.
    double directional_derivative = 0.0;
};

struct EstimationResult {
    bool converged = false;
    int iterations = 0;
    StateVector x_hat;
    Eigen::VectorXd residual;   ///< z - h(x_hat)
    double objective = 0.0;     ///< 1/2 r' W r
    Eigen::VectorXd estimated;  ///< h(x_hat)
    std::vector<IterationRecord> trace;
};

/// Thrown when the iteration cap is hit, values become nonfinite, or a voltage
/// magnitude leaves (0, 5].
class EstimatorDiverged : public Diverged {
public:
    EstimatorDiverged(const std::string& what, int iterations) : Diverged(what), iterations_(iterations) {}
    int iterations() const noexcept { return iterations_; }

private:
    int iterations_;
};

/// Diagonal of W: 1/sigma^2, times pseudo_weight on pseudo rows.
Eigen::VectorXd measurement_weights(const MeasurementSet& set, double pseudo_weight);

/// Gauss-Newton on the normal equations (H'WH) dx = H'W r.
/// Throws NotObservable or EstimatorDiverged.
EstimationResult wls_estimate(const Network& network, const MeasurementSet& set, const EstimatorConfig& config = {});

/// Alternating angle/magnitude half steps with both gain matrices fixed at flat
/// start; the angle half uses the lossless DC Jacobian.
EstimationResult fast_decoupled_estimate(const Network& network, const MeasurementSet& set,
                                         const EstimatorConfig& config = {});

/// Dispatches on config.mode.
EstimationResult estimate(const Network& network, const MeasurementSet& set, const EstimatorConfig& config = {});

struct Observability {
    bool observable = false;
    Eigen::Index rank = 0;
};

/// Numerical rank of H at flat start; observable iff rank equals 2N-1.
Observability observability_check(const Network& network, const MeasurementSet& set);

}  // namespace gridsec
