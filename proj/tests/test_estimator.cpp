#include <doctest.h>

#include <cmath>

#include "gridsec/error.hpp"
#include "gridsec/estimator.hpp"
#include "support.hpp"

using namespace gridsec;

namespace {

MeasurementSet harness_set() { return read_measurement_file(testing::data_path("case14.meas")); }

double state_error(const Network& net, const StateVector& a, const StateVector& b) {
    return (a.to_vector(net) - b.to_vector(net)).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST_CASE("exact measurements are a fixed point") {
    struct Case {
        const char* name;
        bool harness;
    };
    for (const Case c : {Case{"case3.m", false}, Case{"case4.m", false}, Case{"case14.m", false}, Case{"case14.m", true}}) {
        CAPTURE(c.name);
        const Network net = testing::load_case(c.name);
        const MeasurementSet set = c.harness ? harness_set() : default_measurement_set(net);
        const StateVector truth = StateVector::from_case(net);
        const MeasurementSet z = simulate_measurements(net, set, truth, 1, 0.0);
        const EstimationResult r = wls_estimate(net, z);
        CHECK(r.converged);
        CHECK(r.iterations <= 10);
        CHECK(state_error(net, r.x_hat, truth) < 1e-8);
        CHECK(r.objective <= 1e-16);
        CHECK((r.residual - (z.values() - r.estimated)).cwiseAbs().maxCoeff() == 0.0);
        CHECK(r.trace.back().step_norm <= EstimatorConfig{}.convergence_tol);

        const EstimationResult fd = fast_decoupled_estimate(net, z);
        CHECK(state_error(net, fd.x_hat, r.x_hat) < 1e-6);
    }
}

TEST_CASE("two-bus estimate stays within the propagated noise") {
    const Network net = testing::load_case("case2.m");
    MeasurementSet set;
    set.items = {{MeasurementKind::active_flow(1, 2), 0.0, 1e-4, false},
                 {MeasurementKind::voltage(1), 0.0, 1e-4, false},
                 {MeasurementKind::voltage(2), 0.0, 1e-4, false}};
    const StateVector truth = StateVector::from_case(net);
    const Eigen::MatrixXd h = eval_jacobian(net, set, truth).full;
    const Eigen::VectorXd w = measurement_weights(set, 1.0);
    const Eigen::MatrixXd cov = (h.transpose() * w.asDiagonal() * h).inverse();
    const Eigen::VectorXd bound = 3.0 * cov.diagonal().cwiseSqrt();
    int inside = 0, checks = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const EstimationResult r = wls_estimate(net, simulate_measurements(net, set, truth, seed, 1.0));
        REQUIRE(r.converged);
        const Eigen::VectorXd err = (r.x_hat.to_vector(net) - truth.to_vector(net)).cwiseAbs();
        inside += static_cast<int>((err.array() <= bound.array()).count());
        checks += static_cast<int>(err.size());
    }
    // A Gaussian stays inside 3 sigma 99.73% of the time.
    CHECK(inside >= 0.98 * checks);
}

TEST_CASE("unobservable sets are rejected") {
    const Network net = testing::load_case("case14.m");
    MeasurementSet set = default_measurement_set(net);
    set.items.resize(net.state_dimension() - 1);
    CHECK_FALSE(observability_check(net, set).observable);
    CHECK_THROWS_AS(wls_estimate(net, simulate_measurements(net, set, StateVector::from_case(net), 1, 0.0)),
                    NotObservable);

    MeasurementSet volts;
    for (const Bus& b : net.buses()) volts.items.push_back({MeasurementKind::voltage(b.id), 1.0, 1.0, false});
    const Observability obs = observability_check(net, volts);
    CHECK_FALSE(obs.observable);
    CHECK(obs.rank <= static_cast<Eigen::Index>(net.bus_count()));
    CHECK(observability_check(net, MeasurementSet{}).rank == 0);
}

TEST_CASE("observability of full and harness sets") {
    for (const char* name : {"case3.m", "case4.m", "case14.m"}) {
        const Network net = testing::load_case(name);
        MeasurementSet full = all_active_measurements(net);
        for (const Branch& br : net.branches()) {
            full.items.push_back({MeasurementKind::reactive_flow(br.from_bus, br.to_bus), 0.0, 1.0, false});
            full.items.push_back({MeasurementKind::reactive_flow(br.to_bus, br.from_bus), 0.0, 1.0, false});
        }
        for (const Bus& b : net.buses()) {
            full.items.push_back({MeasurementKind::reactive_injection(b.id), 0.0, 1.0, false});
            full.items.push_back({MeasurementKind::voltage(b.id), 0.0, 1.0, false});
        }
        const Observability obs = observability_check(net, full);
        CHECK(obs.observable);
        CHECK(obs.rank == static_cast<Eigen::Index>(net.state_dimension()));
    }
    const Network net = testing::load_case("case14.m");
    CHECK(observability_check(net, harness_set()).rank == 27);
}

TEST_CASE("fast decoupled agrees with full Newton under noise") {
    // The decoupled fixed point drifts from the WLS optimum in proportion to the
    // noise, so the agreement is checked on small networks at modest noise.
    struct Case {
        const char* name;
        double noise_scale;
    };
    for (const Case c : {Case{"case3.m", 0.1}, Case{"case4.m", 0.1}, Case{"case14.m", 0.01}}) {
        CAPTURE(c.name);
        const Network net = testing::load_case(c.name);
        const MeasurementSet set = default_measurement_set(net, {0.02, 0.02, 0.02, 0.02, 0.01});
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const MeasurementSet z = simulate_measurements(net, set, StateVector::from_case(net), seed, c.noise_scale);
            const EstimationResult full = wls_estimate(net, z);
            EstimatorConfig cfg;
            cfg.mode = EstimatorMode::FastDecoupled;
            const EstimationResult fd = estimate(net, z, cfg);
            CHECK(state_error(net, full.x_hat, fd.x_hat) < 1e-4);
        }
    }
}

TEST_CASE("fast decoupled needs both halves") {
    const Network net = testing::load_case("case3.m");
    const MeasurementSet full = default_measurement_set(net);
    MeasurementSet reactive;
    for (std::size_t k : full.reactive_indices()) reactive.items.push_back(full[k]);
    CHECK_THROWS_AS(fast_decoupled_estimate(net, reactive), NotObservable);
    MeasurementSet active;
    for (std::size_t k : full.active_indices()) active.items.push_back(full[k]);
    CHECK_THROWS_AS(fast_decoupled_estimate(net, active), NotObservable);
}

TEST_CASE("Gauss-Newton properties on noisy data") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const MeasurementSet z = simulate_measurements(net, set, StateVector::from_case(net), 42, 1.0);
    const EstimationResult r = wls_estimate(net, z);
    REQUIRE(r.converged);

    SUBCASE("descent direction at every iterate") {
        for (const IterationRecord& it : r.trace) CHECK(it.directional_derivative < 0.0);
    }
    SUBCASE("stationarity") {
        const Eigen::VectorXd w = measurement_weights(z, EstimatorConfig{}.pseudo_weight);
        const Eigen::MatrixXd h = eval_jacobian(net, z, r.x_hat).full;
        const double grad = (h.transpose() * w.asDiagonal() * r.residual).lpNorm<Eigen::Infinity>();
        const double scale = (h.transpose() * w.asDiagonal() * z.values()).lpNorm<Eigen::Infinity>();
        CHECK(grad <= 1e-6 * scale);
    }
    SUBCASE("pseudo rows are enforced") {
        for (std::size_t k : z.pseudo_indices()) CHECK(std::abs(r.residual(static_cast<Eigen::Index>(k))) <= 1e-4);
    }
    SUBCASE("determinism") {
        const EstimationResult again = wls_estimate(net, z);
        CHECK(again.iterations == r.iterations);
        CHECK(again.x_hat.angle == r.x_hat.angle);
        CHECK(again.x_hat.magnitude == r.x_hat.magnitude);
    }
}

TEST_CASE("divergence is reported") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const MeasurementSet z = simulate_measurements(net, set, StateVector::from_case(net), 1, 0.0);
    EstimatorConfig one;
    one.max_iterations = 1;
    try {
        wls_estimate(net, z, one);
        FAIL("expected EstimatorDiverged");
    } catch (const EstimatorDiverged& e) {
        CHECK(e.iterations() == 1);
    }

    MeasurementSet wild = z;
    for (std::size_t k = 0; k < wild.size(); ++k) {
        if (wild[k].kind.type == MeasurementType::VoltageMagnitude) wild[k].value = 50.0;
    }
    CHECK_THROWS_AS(wls_estimate(net, wild), Diverged);
}

TEST_CASE("configuration is validated") {
    const Network net = testing::load_case("case3.m");
    const MeasurementSet z = simulate_measurements(net, default_measurement_set(net), StateVector::from_case(net), 1, 0.0);
    EstimatorConfig cfg;
    cfg.max_iterations = 0;
    CHECK_THROWS_AS(wls_estimate(net, z, cfg), PreconditionError);
    cfg = {};
    cfg.convergence_tol = 0.0;
    CHECK_THROWS_AS(wls_estimate(net, z, cfg), PreconditionError);
    cfg = {};
    cfg.pseudo_weight = 0.5;
    CHECK_THROWS_AS(wls_estimate(net, z, cfg), PreconditionError);

    cfg = {};
    cfg.start = StateVector::from_case(net);
    const EstimationResult warm = wls_estimate(net, z, cfg);
    CHECK(warm.iterations <= 2);
}
