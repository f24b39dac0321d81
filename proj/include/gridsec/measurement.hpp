#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/network.hpp"

namespace gridsec {

/// Bus voltages. Both vectors are indexed by bus position; the reference
/// angle is held at zero and is not a state variable.
struct StateVector {
    Eigen::VectorXd angle;
    Eigen::VectorXd magnitude;

    /// All magnitudes 1 pu, all angles 0.
    static StateVector flat_start(const Network& network);
    /// The Vm/Va columns of the case, with angles taken relative to the reference bus.
    static StateVector from_case(const Network& network);
    /// Inverse of to_vector; the reference angle is set to zero.
    static StateVector from_vector(const Network& network, const Eigen::VectorXd& x);

    /// Estimation-order vector [angles of non-reference buses, all magnitudes], length 2N-1.
    Eigen::VectorXd to_vector(const Network& network) const;
};

enum class MeasurementType { ActiveFlow, ReactiveFlow, ActiveInjection, ReactiveInjection, VoltageMagnitude };

/// What is measured and where. Flows are measured at `bus` towards `to_bus`.
struct MeasurementKind {
    MeasurementType type = MeasurementType::VoltageMagnitude;
    int bus = 0;
    int to_bus = 0;

    static MeasurementKind active_flow(int i, int j) { return {MeasurementType::ActiveFlow, i, j}; }
    static MeasurementKind reactive_flow(int i, int j) { return {MeasurementType::ReactiveFlow, i, j}; }
    static MeasurementKind active_injection(int i) { return {MeasurementType::ActiveInjection, i, 0}; }
    static MeasurementKind reactive_injection(int i) { return {MeasurementType::ReactiveInjection, i, 0}; }
    static MeasurementKind voltage(int i) { return {MeasurementType::VoltageMagnitude, i, 0}; }

    bool is_active() const noexcept {
        return type == MeasurementType::ActiveFlow || type == MeasurementType::ActiveInjection;
    }
    bool is_flow() const noexcept {
        return type == MeasurementType::ActiveFlow || type == MeasurementType::ReactiveFlow;
    }
    std::string label() const;

    bool operator==(const MeasurementKind&) const = default;
};

struct Measurement {
    MeasurementKind kind;
    double value = 0.0;
    double variance = 1.0;
    bool is_pseudo = false;

    bool operator==(const Measurement&) const = default;
};

/// Ordered measurements; the position in `items` is the measurement index used
/// by every downstream module.
struct MeasurementSet {
    std::vector<Measurement> items;

    std::size_t size() const noexcept { return items.size(); }
    const Measurement& operator[](std::size_t k) const { return items[k]; }
    Measurement& operator[](std::size_t k) { return items[k]; }

    Eigen::VectorXd values() const;
    /// Indices of active-power rows, in set order.
    std::vector<std::size_t> active_indices() const;
    std::vector<std::size_t> reactive_indices() const;
    std::vector<std::size_t> pseudo_indices() const;

    bool operator==(const MeasurementSet&) const = default;
};

/// Checks every kind against the network: buses exist, each flow names exactly
/// one in-service branch. Throws SemanticError.
void validate_measurements(const Network& network, const MeasurementSet& set);

/// Column of the angle of bus_id in the estimation ordering, or -1 for the
/// reference bus.
Eigen::Index angle_column_of(const Network& network, int bus_id);

/// h(x) in set order.
Eigen::VectorXd eval_h(const Network& network, const MeasurementSet& set, const StateVector& x);

/// dh/dx with rows in set order and columns [theta non-reference..., V...], plus
/// the active/reactive x angle/magnitude partition.
struct JacobianBlocks {
    Eigen::MatrixXd full;
    std::vector<std::size_t> active_rows;
    std::vector<std::size_t> reactive_rows;
    Eigen::Index angle_columns = 0;

    Eigen::MatrixXd p_theta() const;
    Eigen::MatrixXd p_v() const;
    Eigen::MatrixXd q_theta() const;
    Eigen::MatrixXd q_v() const;
};

JacobianBlocks eval_jacobian(const Network& network, const MeasurementSet& set, const StateVector& x);

/// Linearized active-power model: H_P-theta at flat start with series
/// resistances and shunts dropped. Row r corresponds to measurement rows[r].
struct DcModel {
    Eigen::MatrixXd h;
    std::vector<std::size_t> rows;
    std::vector<MeasurementKind> kinds;  ///< kind of each row
    std::size_t measurement_count = 0;   ///< size of the originating set

    Eigen::Index state_count() const noexcept { return h.cols(); }
    Eigen::Index row_count() const noexcept { return h.rows(); }
    /// Position of measurement index k among rows, or -1.
    Eigen::Index row_of(std::size_t k) const;
};

/// Throws PreconditionError when the set has no active-power rows.
DcModel build_dc_jacobian(const Network& network, const MeasurementSet& set);

/// value_k = h_k(x_true) + noise_scale * sigma_k * N(0,1); pseudo rows are exact.
MeasurementSet simulate_measurements(const Network& network, const MeasurementSet& set, const StateVector& x_true,
                                     std::uint64_t noise_seed, double noise_scale);

/// Per-kind standard deviations used when generating measurement sets.
struct KindSigmas {
    double active_flow = 1.0;
    double reactive_flow = 1.0;
    double active_injection = 1.0;
    double reactive_injection = 1.0;
    double voltage = 1.0;

    double of(MeasurementType type) const;
};

/// Voltage at every bus, P/Q injection at every bus and P/Q flow at the from end
/// of every in-service branch. Injections at zero-injection buses (no load, no
/// generator, no shunt) are exact pseudo-measurements.
MeasurementSet default_measurement_set(const Network& network, const KindSigmas& sigmas = {});

/// Active flows in both directions on every in-service branch plus active
/// injections at every bus. Pseudo flags follow default_measurement_set.
MeasurementSet all_active_measurements(const Network& network, const KindSigmas& sigmas = {});

/// True for load-free, generator-free, shunt-free buses.
bool is_zero_injection_bus(const Network& network, int bus_id);

/// Line-oriented text, one measurement per line: `KIND i [j] sigma [PSEUDO]`
/// with KIND in PFLOW, QFLOW, PINJ, QINJ, VMAG. Line n is measurement index n-1.
MeasurementSet parse_measurement_set(std::string_view text);
MeasurementSet read_measurement_file(const std::filesystem::path& path);
std::string serialize_measurement_set(const MeasurementSet& set);

}  // namespace gridsec
