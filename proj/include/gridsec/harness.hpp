#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridsec/attack.hpp"
#include "gridsec/bdd.hpp"
#include "gridsec/estimator.hpp"
#include "gridsec/measurement.hpp"
#include "gridsec/network.hpp"

namespace gridsec {

enum class AttackMode { Stealthy, Naive };

std::string_view to_string(AttackMode mode);
AttackMode parse_attack_mode(std::string_view text);

/// Network, measurement layout and operator-protected rows loaded from disk.
struct Scenario {
    Network network;
    MeasurementSet set;
    std::vector<std::size_t> protected_set;  ///< extra protected indices, 0-based
};

/// Reads the case and measurement files; protected_path may be empty.
Scenario load_scenario(const std::filesystem::path& case_path, const std::filesystem::path& measurement_path,
                       const std::filesystem::path& protected_path = {});

/// Reads a whole text file; throws IoError.
std::string read_text_file(const std::filesystem::path& path);
/// Writes through a sibling temporary file and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view text);

struct ExperimentPlan {
    std::size_t target = 0;          ///< measurement index, 0-based
    std::vector<double> biases;      ///< per-unit, ascending
    AttackMode mode = AttackMode::Stealthy;
    EstimatorConfig estimator;
    double tau = kDefaultTau;
    std::uint64_t seed = 1;
    double noise_scale = 0.01;       ///< noise standard deviation as a fraction of sigma
    unsigned threads = 1;

    /// Throws PreconditionError on an empty or unsorted schedule.
    void validate() const;
};

/// Biases from start to end inclusive in steps of step, all in MW, converted to per-unit.
std::vector<double> bias_schedule_mw(double start, double step, double end, double base_mva);

enum class RowStatus { Ok, Diverged, Singular };

struct SweepRow {
    double bias = 0.0;         ///< a_k, per-unit
    double false_value = 0.0;  ///< z^a_k
    RowStatus status = RowStatus::Ok;
    int iterations = 0;
    // Only meaningful when status is Ok.
    double estimate = 0.0;     ///< h_k(x_hat^a)
    bool alarm = false;
    double max_rn = 0.0;
    std::optional<std::size_t> max_index;

    bool converged() const noexcept { return status == RowStatus::Ok; }
};

struct SweepSummary {
    std::optional<double> first_detected_bias;
    std::optional<double> first_divergence_bias;
    /// Least-squares slope of estimate against false value over converged,
    /// unalarmed rows; empty with fewer than two such rows.
    std::optional<double> slope;
};

struct SweepReport {
    std::size_t target = 0;
    std::string label;
    AttackMode mode = AttackMode::Stealthy;
    double base_mva = 100.0;
    double tau = kDefaultTau;
    std::uint64_t seed = 0;
    std::optional<std::size_t> alpha;  ///< support size of the stealthy attack
    std::vector<SweepRow> rows;
    SweepSummary summary;
};

SweepSummary summarize(const std::vector<SweepRow>& rows);

/// One estimate + LNR pass per bias on a single noisy draw of z. Throws
/// Infeasible for stealthy sweeps on targets with infinite alpha and
/// NotObservable when the unattacked set is unobservable.
SweepReport run_sweep(const Scenario& scenario, const ExperimentPlan& plan);

enum class ReportFormat { Json, Csv };

ReportFormat parse_report_format(std::string_view text);

/// Six significant digits, stable key and column order.
std::string format_report(const SweepReport& report, ReportFormat format);
/// Throws PreconditionError for a report without rows and IoError on write failure.
void emit_report(const SweepReport& report, ReportFormat format, const std::filesystem::path& path);

/// Readers for emitted reports. The CSV form only carries rows, so the
/// summary is recomputed and header fields stay at their defaults.
SweepReport parse_report_json(std::string_view text);
SweepReport parse_report_csv(std::string_view text);

enum class MetricScanMethod { Exact, Relaxation };

struct MetricScanOptions {
    MetricScanMethod method = MetricScanMethod::Exact;
    unsigned threads = 1;
    std::size_t row_limit = kExactRowLimit;
    bool with_alpha_bar = true;
    std::optional<std::map<std::size_t, std::string>> rtu_groups;
};

/// Buckets [1-2], [3-4], [5-10], [11-20], [>20], [inf].
inline constexpr std::array<const char*, 6> kHistogramBuckets = {"1-2", "3-4", "5-10", "11-20", ">20", "inf"};

struct MetricScan {
    SecurityMetricReport report;
    std::array<std::size_t, 6> histogram{};
    std::vector<std::string> labels;  ///< kind label per entry
};

std::size_t histogram_bucket(const std::optional<std::size_t>& alpha);

/// alpha for every unprotected active measurement and alpha_bar on the set of
/// both-direction flows plus all injections, protected by kind.
MetricScan run_metric_scan(const Network& network, const MeasurementSet& set,
                           const std::vector<std::size_t>& protected_set, const MetricScanOptions& options = {});

std::string format_metric_scan(const MetricScan& scan);

}  // namespace gridsec
