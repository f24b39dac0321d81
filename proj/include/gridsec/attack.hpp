#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/measurement.hpp"
#include "gridsec/network.hpp"

namespace gridsec {

/// |a_i| below this counts as zero when taking cardinalities.
inline constexpr double kAttackZeroTolerance = 1e-9;
/// Largest DC row count the exact search accepts unless overridden.
inline constexpr std::size_t kExactRowLimit = 60;

/// Indices here are measurement indices (0-based positions in the set).
struct AttackSpec {
    std::size_t target = 0;
    double magnitude = 1.0;
    std::vector<std::size_t> protected_set;
};

/// a = H_DC c on active rows, zero elsewhere.
struct AttackVector {
    Eigen::VectorXd a;                  ///< one entry per measurement
    Eigen::VectorXd c;                  ///< angle perturbation, one entry per DC column
    std::vector<std::size_t> support;   ///< measurement indices with a != 0
    std::vector<std::size_t> unaffected;  ///< DC rows (measurement indices) with a == 0

    std::size_t cardinality() const noexcept { return support.size(); }
};

enum class MetricMethod { Exact, Relaxation };

/// One target measurement. An empty alpha means infinity (fully protected).
struct MetricEntry {
    std::size_t k = 0;
    std::optional<std::size_t> alpha;
    std::optional<std::size_t> alpha_bar;
    std::optional<AttackVector> witness;
    std::optional<std::size_t> rtus;  ///< distinct RTUs touched by the witness
};

struct SecurityMetricReport {
    MetricMethod method = MetricMethod::Exact;
    std::vector<MetricEntry> entries;  ///< ordered by k

    const MetricEntry* find(std::size_t k) const;
};

/// Pseudo rows of the set plus any extra indices, sorted and unique.
std::vector<std::size_t> protected_rows(const MeasurementSet& set, const std::vector<std::size_t>& extra = {});

/// Minimum-cardinality stealthy attack with a_target = magnitude (lexicographically
/// smallest support among ties). Throws Infeasible when alpha is infinite and
/// PreconditionError for protected or non-active targets.
AttackVector synth_attack(const DcModel& model, const AttackSpec& spec);

struct ExactSearchOptions {
    std::size_t row_limit = kExactRowLimit;
    unsigned threads = 1;
};

/// alpha_k for every unprotected active row, by closure-pruned search over the
/// zero sets of the DC model. Throws PreconditionError past the row limit and
/// NotObservable when H_DC is column rank deficient.
SecurityMetricReport security_metric_exact(const DcModel& model, const std::vector<std::size_t>& protected_set,
                                           const ExactSearchOptions& options = {});

/// Upper bound on alpha_k from an l1 relaxation followed by sparsification.
SecurityMetricReport security_metric_relaxation(const DcModel& model, const std::vector<std::size_t>& protected_set);

/// Minimum attack for a single target; empty when alpha is infinite.
std::optional<AttackVector> exact_min_attack(const DcModel& model, std::size_t target,
                                             const std::vector<std::size_t>& protected_set,
                                             std::size_t row_limit = kExactRowLimit);
std::optional<AttackVector> relaxed_attack(const DcModel& model, std::size_t target,
                                           const std::vector<std::size_t>& protected_set);

/// rank(H_U) = n - 1 and rank(H_{U+i}) = n for every support row i, on the DC
/// model. Throws PreconditionError for an empty attack.
bool verify_rank_lemma(const DcModel& model, const AttackVector& attack);

/// DC model after scaling the susceptance of one branch by `factor`: flow rows
/// of the branch scale by factor and the injection rows at its ends absorb
/// (factor - 1) times the flow row.
DcModel perturb_line(const DcModel& model, const Network& network, std::size_t branch, double factor);

/// True iff the attack stays in Im(perturbed) within a 1e-8 projection residual.
/// Throws PreconditionError when a changed flow row lies in the attack support
/// or the sparsity pattern of the model changed.
bool check_model_invariance(const DcModel& model, const DcModel& perturbed, const AttackVector& attack);

struct SaturationViolation {
    std::size_t k = 0;
    double value = 0.0;
    double limit = 0.0;     ///< |V_i V_j b_ij| at V = 1
    double headroom = 0.0;  ///< limit - |value|, negative when violated
};

/// Active flows whose |z_a| exceeds the line's maximum transferable power. When
/// `attacked` is non-empty only those indices are checked.
std::vector<SaturationViolation> check_saturation(const Network& network, const MeasurementSet& set,
                                                  const Eigen::VectorXd& z_a,
                                                  const std::vector<std::size_t>& attacked = {});

/// z^a = z + a. Throws PreconditionError on dimension mismatch or when a
/// touches a pseudo row.
MeasurementSet apply_attack(const MeasurementSet& set, const AttackVector& attack);
MeasurementSet apply_attack(const MeasurementSet& set, const Eigen::VectorXd& a);

/// Scales an attack so that a_target equals magnitude.
AttackVector scale_attack(const AttackVector& attack, std::size_t target, double magnitude);

/// Protected-set text: one 1-based measurement index per line. Returns 0-based indices.
std::vector<std::size_t> parse_protected_set(std::string_view text);

/// RTU grouping text: `rtu_id: k1,k2,...` with 1-based indices. Maps 0-based
/// measurement index to RTU id.
std::map<std::size_t, std::string> parse_rtu_groups(std::string_view text);
std::size_t count_rtus(const AttackVector& attack, const std::map<std::size_t, std::string>& groups);

}  // namespace gridsec
