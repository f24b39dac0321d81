#include <doctest.h>

#include <cmath>
#include <random>

#include "gridsec/bdd.hpp"
#include "gridsec/error.hpp"
#include "gridsec/estimator.hpp"
#include "support.hpp"

using namespace gridsec;

namespace {

MeasurementSet harness_set() { return read_measurement_file(testing::data_path("case14.meas")); }

Eigen::MatrixXd jacobian_at_truth(const Network& net, const MeasurementSet& set) {
    return eval_jacobian(net, set, StateVector::from_case(net)).full;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("residual sensitivity is a projector annihilating H") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = default_measurement_set(net);
    const Eigen::MatrixXd h = jacobian_at_truth(net, set);
    const Eigen::VectorXd unit = Eigen::VectorXd::Ones(h.rows());
    const Eigen::MatrixXd s = residual_sensitivity(h, unit);
    CHECK((s * h).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((s * s - s).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(s.trace() == doctest::Approx(static_cast<double>(h.rows() - h.cols())).epsilon(1e-9));
    const Eigen::VectorXd omega = s.diagonal();
    CHECK(omega.minCoeff() >= -1e-12);
    CHECK(omega.maxCoeff() <= 1.0 + 1e-12);

    const Eigen::VectorXd w = measurement_weights(harness_set(), 1e6);
    const Eigen::MatrixXd hh = jacobian_at_truth(net, harness_set());
    const Eigen::MatrixXd sw = residual_sensitivity(hh, w);
    CHECK((sw * hh).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(sw.trace() == doctest::Approx(static_cast<double>(hh.rows() - hh.cols())).epsilon(1e-8));
}

TEST_CASE("square or deficient H") {
    const Eigen::MatrixXd square = (Eigen::MatrixXd(2, 2) << 2, 1, 0, 3).finished();
    CHECK(residual_sensitivity(square, Eigen::VectorXd::Ones(2)).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::MatrixXd flat = (Eigen::MatrixXd(3, 2) << 1, 2, 2, 4, 3, 6).finished();
    CHECK_THROWS_AS(residual_sensitivity(flat, Eigen::VectorXd::Ones(3)), NotObservable);
    CHECK_THROWS_AS(residual_sensitivity(square, Eigen::VectorXd::Ones(3)), PreconditionError);
}

TEST_CASE("zero residual gives zero normalized residual") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const MeasurementSet z = simulate_measurements(net, set, StateVector::from_case(net), 1, 0.0);
    const ResidualAnalysis a = analyze_residuals(net, z, wls_estimate(net, z));
    CHECK(a.rn.cwiseAbs().maxCoeff() < 1e-6);
    CHECK_FALSE(a.alarm);
}

TEST_CASE("normalized residuals have unit variance") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const Eigen::MatrixXd h = jacobian_at_truth(net, set);
    const Eigen::VectorXd w = measurement_weights(set, 1e6);
    const Eigen::MatrixXd s = residual_sensitivity(h, w);
    std::vector<bool> pseudo(set.size(), false);
    for (std::size_t k : set.pseudo_indices()) pseudo[k] = true;

    std::mt19937_64 rng(7);
    std::normal_distribution<double> n01;
    const Eigen::Index m = h.rows();
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(m);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        Eigen::VectorXd e(m);
        for (Eigen::Index k = 0; k < m; ++k) e(k) = n01(rng) / std::sqrt(w(k));
        const NormalizedResiduals nr = normalized_residuals(s * e, s, w, pseudo);
        sum_sq += nr.rn.cwiseAbs2();
    }
    const NormalizedResiduals shape = normalized_residuals(Eigen::VectorXd::Zero(m), s, w, pseudo);
    for (Eigen::Index k = 0; k < m; ++k) {
        if (!shape.included[static_cast<std::size_t>(k)]) continue;
        CAPTURE(k);
        CHECK(sum_sq(k) / draws == doctest::Approx(1.0).epsilon(0.05));
    }
}

TEST_CASE("a gross error is identified") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const StateVector truth = StateVector::from_case(net);
    const std::size_t k = 5;  // PFLOW 3 2, comfortably redundant
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        MeasurementSet z = simulate_measurements(net, set, truth, seed, 1.0);
        z[k].value += 20.0 * std::sqrt(z[k].variance);
        const ResidualAnalysis a = analyze_residuals(net, z, wls_estimate(net, z));
        if (a.alarm && a.max_index == k) ++hits;
    }
    CHECK(hits >= 99);
}

TEST_CASE("LNR threshold boundary") {
    const double tau = 3.0;
    Eigen::VectorXd rn = Eigen::VectorXd::Constant(6, tau);
    rn(1) = -2.0;
    const std::vector<bool> all(6, true);
    CHECK_FALSE(lnr_test(rn, all, tau).alarm);
    rn(4) = -(tau + 0.01);
    const LnrResult r = lnr_test(rn, all, tau);
    CHECK(r.alarm);
    CHECK(r.max_index == 4u);
    CHECK(r.max_value == doctest::Approx(tau + 0.01));

    std::vector<bool> skip = all;
    skip[4] = false;
    CHECK_FALSE(lnr_test(rn, skip, tau).alarm);
    CHECK_FALSE(lnr_test(Eigen::VectorXd(0), {}, tau).max_index.has_value());
}

TEST_CASE("clean alarm rate stays under the independent-rows bound") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const Eigen::MatrixXd h = jacobian_at_truth(net, set);
    const Eigen::VectorXd w = measurement_weights(set, 1e6);
    const Eigen::MatrixXd s = residual_sensitivity(h, w);
    std::vector<bool> pseudo(set.size(), false);
    for (std::size_t k : set.pseudo_indices()) pseudo[k] = true;
    const NormalizedResiduals shape = normalized_residuals(Eigen::VectorXd::Zero(h.rows()), s, w, pseudo);
    const auto m_eff = static_cast<double>(std::count(shape.included.begin(), shape.included.end(), true));

    std::mt19937_64 rng(11);
    std::normal_distribution<double> n01;
    const int draws = 20000;
    int alarms = 0;
    for (int d = 0; d < draws; ++d) {
        Eigen::VectorXd e(h.rows());
        for (Eigen::Index k = 0; k < h.rows(); ++k) e(k) = n01(rng) / std::sqrt(w(k));
        const NormalizedResiduals nr = normalized_residuals(s * e, s, w, pseudo);
        alarms += lnr_test(nr.rn, nr.included, 3.0).alarm ? 1 : 0;
    }
    // Residuals are positively correlated, so the independent-rows figure is
    // an upper bound and the union bound m_eff * P(|N| > 3) a looser one still.
    const double independent = 1.0 - std::pow(2.0 * phi(3.0) - 1.0, m_eff);
    const double rate = static_cast<double>(alarms) / draws;
    const double se = std::sqrt(independent * (1 - independent) / draws);
    CHECK(rate <= independent + 4 * se);
    CHECK(rate >= 0.5 * independent);
}

TEST_CASE("threshold from false alarm probability") {
    CHECK(threshold_from_false_alarm(0.0027, 1) == doctest::Approx(testing::normal_quantile(1 - 0.00135)).epsilon(1e-9));
    CHECK(threshold_from_false_alarm(0.0027, 1) == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(threshold_from_false_alarm(1.0 - 1e-9, 1) < 1e-8);
    double prev = 0.0;
    for (std::size_t m : {1u, 2u, 5u, 10u, 50u, 100u}) {
        const double tau = threshold_from_false_alarm(0.01, m);
        CHECK(tau > prev);
        CHECK(tau == doctest::Approx(testing::normal_quantile(1 - 0.01 / (2.0 * m))).epsilon(1e-9));
        prev = tau;
    }
    CHECK_THROWS_AS(threshold_from_false_alarm(0.0, 3), PreconditionError);
    CHECK_THROWS_AS(threshold_from_false_alarm(1.0, 3), PreconditionError);
    CHECK_THROWS_AS(threshold_from_false_alarm(-0.1, 3), PreconditionError);
    CHECK_THROWS_AS(threshold_from_false_alarm(0.1, 0), PreconditionError);
}

TEST_CASE("attacks in the column space of H leave the residual alone") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const Eigen::MatrixXd h = jacobian_at_truth(net, set);
    const Eigen::VectorXd w = measurement_weights(set, 1e6);
    const Eigen::MatrixXd s = residual_sensitivity(h, w);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    Eigen::VectorXd c(h.cols()), r(h.rows());
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = n01(rng);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = 0.01 * n01(rng);
    const Eigen::VectorXd base = normalized_residuals(s * r, s, w).rn;
    const Eigen::VectorXd shifted = normalized_residuals(s * (r + h * c), s, w).rn;
    CHECK((base - shifted).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("shifting measurements and estimates together changes nothing") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet set = harness_set();
    const MeasurementSet z = simulate_measurements(net, set, StateVector::from_case(net), 5, 1.0);
    const EstimationResult est = wls_estimate(net, z);
    const Eigen::MatrixXd h = eval_jacobian(net, z, est.x_hat).full;
    const Eigen::VectorXd w = measurement_weights(z, 1e6);
    const Eigen::MatrixXd s = residual_sensitivity(h, w);
    const Eigen::VectorXd zv = z.values();
    const Eigen::VectorXd d = 2.0 * zv;
    const Eigen::VectorXd r1 = zv - est.estimated;
    const Eigen::VectorXd r2 = (zv + d) - (est.estimated + d);
    const NormalizedResiduals a = normalized_residuals(r1, s, w);
    const NormalizedResiduals b = normalized_residuals(r2, s, w);
    CHECK((a.rn - b.rn).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(lnr_test(a.rn, a.included, 3.0).alarm == lnr_test(b.rn, b.included, 3.0).alarm);
}

TEST_CASE("pseudo and critical rows are kept out of the test") {
    const Network net = testing::load_case("case14.m");
    const MeasurementSet z = simulate_measurements(net, harness_set(), StateVector::from_case(net), 2, 1.0);
    const ResidualAnalysis a = analyze_residuals(net, z, wls_estimate(net, z));
    for (std::size_t k : z.pseudo_indices()) {
        CHECK_FALSE(a.included[k]);
        CHECK(a.rn(static_cast<Eigen::Index>(k)) == 0.0);
    }

    // Two-bus set where only the second voltage is measured twice.
    const Network two = testing::load_case("case2.m");
    MeasurementSet set;
    set.items = {{MeasurementKind::active_flow(1, 2), 0.0, 0.01, false},
                 {MeasurementKind::voltage(1), 0.0, 0.01, false},
                 {MeasurementKind::voltage(2), 0.0, 0.01, false},
                 {MeasurementKind::voltage(2), 0.0, 0.01, false}};
    const MeasurementSet z2 = simulate_measurements(two, set, StateVector::from_case(two), 3, 1.0);
    const ResidualAnalysis b = analyze_residuals(two, z2, wls_estimate(two, z2));
    CHECK(b.critical == std::vector<std::size_t>{0, 1});
    CHECK_FALSE(b.included[0]);
    CHECK(b.included[2]);
    CHECK(b.included[3]);
}
