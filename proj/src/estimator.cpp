#include "gridsec/estimator.hpp"

#include <cmath>
#include <string>

#include "gridsec/linalg.hpp"

namespace gridsec {

namespace {

constexpr double kMaxMagnitude = 5.0;

void check_state(const StateVector& x, int iteration) {
    if (!x.angle.allFinite() || !x.magnitude.allFinite()) {
        throw EstimatorDiverged("state became nonfinite at iteration " + std::to_string(iteration), iteration);
    }
    for (Eigen::Index i = 0; i < x.magnitude.size(); ++i) {
        const double v = x.magnitude(i);
        if (!(v > 0.0) || v > kMaxMagnitude) {
            throw EstimatorDiverged("voltage magnitude left (0, 5] at iteration " + std::to_string(iteration),
                                    iteration);
        }
    }
}

/// Cholesky of a gain matrix; a failed factorization means a rank-deficient gain.
Eigen::LLT<Eigen::MatrixXd> factor_gain(const Eigen::MatrixXd& gain, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(gain);
    if (llt.info() != Eigen::Success || !gain.allFinite()) {
        throw NotObservable(std::string(what) + " gain matrix is not positive definite");
    }
    return llt;
}

EstimationResult finish(const Network& network, const MeasurementSet& set, const Eigen::VectorXd& weights,
                        StateVector x, int iterations, std::vector<IterationRecord> trace) {
    EstimationResult result;
    result.converged = true;
    result.iterations = iterations;
    result.estimated = eval_h(network, set, x);
    result.residual = set.values() - result.estimated;
    result.objective = 0.5 * result.residual.dot(weights.asDiagonal() * result.residual);
    result.x_hat = std::move(x);
    result.trace = std::move(trace);
    return result;
}

}  // namespace

void EstimatorConfig::validate() const {
    if (max_iterations < 1) throw PreconditionError("max_iterations must be >= 1");
    if (!(convergence_tol > 0.0)) throw PreconditionError("convergence_tol must be positive");
    if (!(pseudo_weight >= 1.0)) throw PreconditionError("pseudo_weight must be >= 1");
}

Eigen::VectorXd measurement_weights(const MeasurementSet& set, double pseudo_weight) {
    Eigen::VectorXd w(static_cast<Eigen::Index>(set.size()));
    for (std::size_t k = 0; k < set.size(); ++k) {
        const double base = 1.0 / set[k].variance;
        w(static_cast<Eigen::Index>(k)) = set[k].is_pseudo ? base * pseudo_weight : base;
    }
    return w;
}

Observability observability_check(const Network& network, const MeasurementSet& set) {
    const auto n = static_cast<Eigen::Index>(network.state_dimension());
    if (set.size() == 0) return {false, 0};
    const JacobianBlocks jac = eval_jacobian(network, set, StateVector::flat_start(network));
    const Eigen::Index rank = numerical_rank(jac.full);
    return {rank == n, rank};
}

EstimationResult wls_estimate(const Network& network, const MeasurementSet& set, const EstimatorConfig& config) {
    config.validate();
    validate_measurements(network, set);
    const Observability obs = observability_check(network, set);
    if (!obs.observable) {
        throw NotObservable("measurement Jacobian has rank " + std::to_string(obs.rank) + ", need " +
                            std::to_string(network.state_dimension()));
    }

    const Eigen::VectorXd w = measurement_weights(set, config.pseudo_weight);
    const Eigen::VectorXd z = set.values();
    StateVector x = config.start.value_or(StateVector::flat_start(network));
    check_state(x, 0);
    std::vector<IterationRecord> trace;

    for (int it = 1; it <= config.max_iterations; ++it) {
        const Eigen::VectorXd r = z - eval_h(network, set, x);
        const Eigen::MatrixXd h = eval_jacobian(network, set, x).full;
        const Eigen::MatrixXd hw = h.transpose() * w.asDiagonal();
        const Eigen::VectorXd rhs = hw * r;
        const Eigen::VectorXd dx = factor_gain(hw * h, "WLS").solve(rhs);
        if (!dx.allFinite()) throw EstimatorDiverged("nonfinite step at iteration " + std::to_string(it), it);

        trace.push_back({dx.lpNorm<Eigen::Infinity>(), 0.5 * r.dot(w.asDiagonal() * r), -rhs.dot(dx)});
        x = StateVector::from_vector(network, x.to_vector(network) + dx);
        check_state(x, it);
        if (trace.back().step_norm <= config.convergence_tol) {
            return finish(network, set, w, std::move(x), it, std::move(trace));
        }
    }
    throw EstimatorDiverged("no convergence within " + std::to_string(config.max_iterations) + " iterations",
                            config.max_iterations);
}

EstimationResult fast_decoupled_estimate(const Network& network, const MeasurementSet& set,
                                         const EstimatorConfig& config) {
    config.validate();
    validate_measurements(network, set);
    const auto active = set.active_indices();
    const auto reactive = set.reactive_indices();
    if (active.empty()) throw NotObservable("angle subproblem has no active-power measurements");
    if (reactive.empty()) throw NotObservable("magnitude subproblem has no reactive or voltage measurements");

    const Eigen::VectorXd w = measurement_weights(set, config.pseudo_weight);
    auto subset = [](const Eigen::VectorXd& v, const std::vector<std::size_t>& idx) {
        Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t r = 0; r < idx.size(); ++r) out(static_cast<Eigen::Index>(r)) = v(static_cast<Eigen::Index>(idx[r]));
        return out;
    };
    const Eigen::VectorXd w_p = subset(w, active);
    const Eigen::VectorXd w_q = subset(w, reactive);

    const Eigen::MatrixXd h_p = build_dc_jacobian(network, set).h;
    const Eigen::MatrixXd h_q = eval_jacobian(network, set, StateVector::flat_start(network)).q_v();
    if (numerical_rank(h_p) < h_p.cols()) throw NotObservable("angle subproblem is rank deficient");
    if (numerical_rank(h_q) < h_q.cols()) throw NotObservable("magnitude subproblem is rank deficient");
    const Eigen::MatrixXd hw_p = h_p.transpose() * w_p.asDiagonal();
    const Eigen::MatrixXd hw_q = h_q.transpose() * w_q.asDiagonal();
    const auto gain_p = factor_gain(hw_p * h_p, "angle");
    const auto gain_q = factor_gain(hw_q * h_q, "magnitude");

    const Eigen::VectorXd z = set.values();
    StateVector x = config.start.value_or(StateVector::flat_start(network));
    check_state(x, 0);
    const auto ref = static_cast<Eigen::Index>(network.reference_index());
    std::vector<IterationRecord> trace;

    for (int it = 1; it <= config.max_iterations; ++it) {
        const Eigen::VectorXd r_p = subset(z - eval_h(network, set, x), active);
        const Eigen::VectorXd d_theta = gain_p.solve(hw_p * r_p);
        for (Eigen::Index i = 0, col = 0; i < x.angle.size(); ++i) {
            if (i != ref) x.angle(i) += d_theta(col++);
        }

        const Eigen::VectorXd r_full = z - eval_h(network, set, x);
        const Eigen::VectorXd r_q = subset(r_full, reactive);
        const Eigen::VectorXd d_v = gain_q.solve(hw_q * r_q);
        x.magnitude += d_v;
        check_state(x, it);

        const double step = std::max(d_theta.lpNorm<Eigen::Infinity>(), d_v.lpNorm<Eigen::Infinity>());
        trace.push_back({step, 0.5 * r_full.dot(w.asDiagonal() * r_full), 0.0});
        if (step <= config.convergence_tol) return finish(network, set, w, std::move(x), it, std::move(trace));
    }
    throw EstimatorDiverged("no convergence within " + std::to_string(config.max_iterations) + " iterations",
                            config.max_iterations);
}

EstimationResult estimate(const Network& network, const MeasurementSet& set, const EstimatorConfig& config) {
    return config.mode == EstimatorMode::FullNewton ? wls_estimate(network, set, config)
                                                    : fast_decoupled_estimate(network, set, config);
}

}  // namespace gridsec
