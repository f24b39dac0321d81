#include "gridsec/attack.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <thread>

#include "gridsec/error.hpp"
#include "gridsec/linalg.hpp"

namespace gridsec {

namespace {

using Mask = std::uint64_t;

constexpr Mask bit(std::size_t i) { return Mask{1} << i; }

/// Span bookkeeping over the rows of H_DC: a flat is a set of rows closed under
/// linear span, carried with an orthonormal basis of that span.
class RowSpace {
public:
    explicit RowSpace(const Eigen::MatrixXd& h) : h_(h), norms_(h.rowwise().norm()) {
        if (h.rows() > 64) throw PreconditionError("span search supports at most 64 rows");
        all_ = h.rows() == 64 ? ~Mask{0} : bit(static_cast<std::size_t>(h.rows())) - 1;
    }

    struct Flat {
        Mask members = 0;
        Eigen::MatrixXd basis;  // d x rank, orthonormal columns
    };

    Mask all() const { return all_; }
    Eigen::Index rows() const { return h_.rows(); }
    Eigen::Index dim() const { return h_.cols(); }

    Flat empty_flat() const {
        Flat f{0, Eigen::MatrixXd(dim(), 0)};
        f.members = close(f.basis, 0);
        return f;
    }

    bool in_span(const Eigen::MatrixXd& basis, Eigen::Index row) const {
        if (norms_(row) == 0.0) return true;
        Eigen::VectorXd v = h_.row(row).transpose();
        if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
        return v.norm() <= kRankTolerance * norms_(row);
    }

    /// cl(F + row); row must lie outside F.
    Flat extend(const Flat& f, Eigen::Index row) const {
        Eigen::VectorXd v = h_.row(row).transpose();
        for (int pass = 0; pass < 2; ++pass) {
            if (f.basis.cols() > 0) v -= f.basis * (f.basis.transpose() * v);
        }
        Flat out;
        out.basis.resize(dim(), f.basis.cols() + 1);
        out.basis.leftCols(f.basis.cols()) = f.basis;
        out.basis.col(f.basis.cols()) = v.normalized();
        out.members = close(out.basis, f.members | bit(static_cast<std::size_t>(row)));
        return out;
    }

    /// Component of row orthogonal to span(F), i.e. the angle perturbation that
    /// zeroes every row of F.
    Eigen::VectorXd orthogonal_part(const Flat& f, Eigen::Index row) const {
        Eigen::VectorXd v = h_.row(row).transpose();
        for (int pass = 0; pass < 2; ++pass) {
            if (f.basis.cols() > 0) v -= f.basis * (f.basis.transpose() * v);
        }
        return v;
    }

private:
    Mask close(const Eigen::MatrixXd& basis, Mask members) const {
        for (Eigen::Index r = 0; r < rows(); ++r) {
            if (!(members & bit(static_cast<std::size_t>(r))) && in_span(basis, r)) {
                members |= bit(static_cast<std::size_t>(r));
            }
        }
        return members;
    }

    const Eigen::MatrixXd& h_;
    Eigen::VectorXd norms_;
    Mask all_ = 0;
};

Mask protected_mask(const DcModel& model, const std::vector<std::size_t>& protected_set) {
    Mask mask = 0;
    for (std::size_t k : protected_set) {
        const Eigen::Index r = model.row_of(k);
        if (r >= 0) mask |= bit(static_cast<std::size_t>(r));
    }
    return mask;
}

RowSpace::Flat protected_flat(const RowSpace& space, Mask protected_rows) {
    RowSpace::Flat flat = space.empty_flat();
    for (Eigen::Index r = 0; r < space.rows(); ++r) {
        if ((protected_rows & bit(static_cast<std::size_t>(r))) && !(flat.members & bit(static_cast<std::size_t>(r)))) {
            flat = space.extend(flat, r);
        }
    }
    return flat;
}

/// Attack whose zero set contains `flat`, normalized to a_target = 1.
AttackVector witness_from_flat(const DcModel& model, const RowSpace& space, const RowSpace::Flat& flat,
                               Eigen::Index target_row) {
    Eigen::VectorXd c = space.orthogonal_part(flat, target_row);
    c /= model.h.row(target_row).dot(c);
    Eigen::VectorXd a_dc = model.h * c;

    AttackVector attack;
    attack.c = c;
    attack.a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.measurement_count));
    for (Eigen::Index r = 0; r < a_dc.size(); ++r) {
        const std::size_t k = model.rows[static_cast<std::size_t>(r)];
        const bool zero = (flat.members & bit(static_cast<std::size_t>(r))) || std::abs(a_dc(r)) < kAttackZeroTolerance;
        if (zero) {
            attack.unaffected.push_back(k);
        } else {
            attack.a(static_cast<Eigen::Index>(k)) = a_dc(r);
            attack.support.push_back(k);
        }
    }
    attack.a(static_cast<Eigen::Index>(model.rows[static_cast<std::size_t>(target_row)])) = 1.0;
    return attack;
}

/// Depth-first search over decisions "row is attacked" / "row stays zero", in
/// row order, attacked branch first. Zero decisions are closed under span, so
/// every leaf is a flat F and its attack support is the complement of F. With
/// the attacked branch explored first, leaves of equal size appear in
/// lexicographic order of their supports.
class MinimumCocircuitSearch {
public:
    MinimumCocircuitSearch(const RowSpace& space, Eigen::Index target, std::size_t upper_bound)
        : space_(space), target_bit_(bit(static_cast<std::size_t>(target))), best_size_(upper_bound) {}

    std::optional<RowSpace::Flat> run(const RowSpace::Flat& root) {
        if (root.members & target_bit_) return std::nullopt;
        visit(0, root, target_bit_, 1);
        return best_;
    }

private:
    bool acceptable(std::size_t size) const { return best_ ? size < best_size_ : size <= best_size_; }

    void visit(Eigen::Index pos, const RowSpace::Flat& zero, Mask attacked, std::size_t count) {
        const Mask decided = zero.members | attacked;
        Eigen::Index e = pos;
        while (e < space_.rows() && (decided & bit(static_cast<std::size_t>(e)))) ++e;
        if (e == space_.rows()) {
            best_size_ = count;
            best_ = zero;
            return;
        }
        if (acceptable(count + 1)) visit(e + 1, zero, attacked | bit(static_cast<std::size_t>(e)), count + 1);
        if (!acceptable(count)) return;
        const RowSpace::Flat next = space_.extend(zero, e);
        if (next.members & attacked) return;
        visit(e + 1, next, attacked, count);
    }

    const RowSpace& space_;
    Mask target_bit_;
    std::size_t best_size_;
    std::optional<RowSpace::Flat> best_;
};

/// Greedy growth of a zero flat while the target stays outside it.
RowSpace::Flat grow_flat(const RowSpace& space, RowSpace::Flat flat, Eigen::Index target_row) {
    const Mask target_bit = bit(static_cast<std::size_t>(target_row));
    for (Eigen::Index e = 0; e < space.rows(); ++e) {
        if (e == target_row || (flat.members & bit(static_cast<std::size_t>(e)))) continue;
        RowSpace::Flat next = space.extend(flat, e);
        if (!(next.members & target_bit)) flat = std::move(next);
    }
    return flat;
}

/// Minimizes sum |h_i c| over unprotected rows subject to h_t c = 1 and
/// H_P c = 0, by iteratively reweighted least squares. Returns c.
std::optional<Eigen::VectorXd> l1_minimize(const Eigen::MatrixXd& h, Eigen::Index target, Mask protected_rows) {
    std::vector<Eigen::Index> constrained;
    std::vector<Eigen::Index> free_rows;
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        if (r == target || (protected_rows & bit(static_cast<std::size_t>(r)))) {
            constrained.push_back(r);
        } else {
            free_rows.push_back(r);
        }
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(constrained.size()), h.cols());
    Eigen::VectorXd b = Eigen::VectorXd::Zero(a.rows());
    for (std::size_t i = 0; i < constrained.size(); ++i) {
        a.row(static_cast<Eigen::Index>(i)) = h.row(constrained[i]);
        if (constrained[i] == target) b(static_cast<Eigen::Index>(i)) = 1.0;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    cod.setThreshold(kRankTolerance);
    const Eigen::VectorXd c0 = cod.solve(b);
    if ((a * c0 - b).norm() > 1e-8) return std::nullopt;

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
    svd.setThreshold(kRankTolerance);
    const Eigen::Index rank = svd.rank();
    const Eigen::MatrixXd null_basis = svd.matrixV().rightCols(h.cols() - rank);
    if (null_basis.cols() == 0 || free_rows.empty()) return c0;

    Eigen::MatrixXd hf(static_cast<Eigen::Index>(free_rows.size()), h.cols());
    for (std::size_t i = 0; i < free_rows.size(); ++i) hf.row(static_cast<Eigen::Index>(i)) = h.row(free_rows[i]);
    const Eigen::MatrixXd bmat = hf * null_basis;
    const Eigen::VectorXd offset = hf * c0;

    Eigen::VectorXd y = Eigen::VectorXd::Zero(null_basis.cols());
    Eigen::VectorXd weights = Eigen::VectorXd::Ones(bmat.rows());
    double eps = 1.0;
    for (int it = 0; it < 300; ++it) {
        const Eigen::MatrixXd bw = bmat.transpose() * weights.asDiagonal();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(bw * bmat + 1e-14 * Eigen::MatrixXd::Identity(bmat.cols(), bmat.cols()));
        const Eigen::VectorXd next = ldlt.solve(-bw * offset);
        if (!next.allFinite()) throw Error("relaxation solve produced nonfinite values");
        const double change = (next - y).lpNorm<Eigen::Infinity>();
        y = next;
        const Eigen::VectorXd residual = offset + bmat * y;
        for (Eigen::Index i = 0; i < residual.size(); ++i) {
            weights(i) = 1.0 / std::sqrt(residual(i) * residual(i) + eps * eps);
        }
        if (change < 1e-12 && eps <= 1e-10) break;
        if (change < 1e-3 * eps || it % 10 == 9) eps = std::max(eps * 0.1, 1e-10);
    }
    return Eigen::VectorXd(c0 + null_basis * y);
}

void check_target(const DcModel& model, std::size_t target, const std::vector<std::size_t>& protected_set) {
    if (model.row_of(target) < 0) {
        throw PreconditionError("measurement " + std::to_string(target + 1) + " is not an active-power row");
    }
    if (std::find(protected_set.begin(), protected_set.end(), target) != protected_set.end()) {
        throw PreconditionError("measurement " + std::to_string(target + 1) + " is protected");
    }
}

std::vector<std::size_t> unprotected_targets(const DcModel& model, const std::vector<std::size_t>& protected_set) {
    std::vector<std::size_t> out;
    for (std::size_t k : model.rows) {
        if (std::find(protected_set.begin(), protected_set.end(), k) == protected_set.end()) out.push_back(k);
    }
    return out;
}

template <typename Fn>
void for_each_parallel(std::size_t count, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

const MetricEntry* SecurityMetricReport::find(std::size_t k) const {
    for (const MetricEntry& e : entries) {
        if (e.k == k) return &e;
    }
    return nullptr;
}

std::vector<std::size_t> protected_rows(const MeasurementSet& set, const std::vector<std::size_t>& extra) {
    std::set<std::size_t> rows(extra.begin(), extra.end());
    for (std::size_t k : set.pseudo_indices()) rows.insert(k);
    return {rows.begin(), rows.end()};
}

std::optional<AttackVector> relaxed_attack(const DcModel& model, std::size_t target,
                                           const std::vector<std::size_t>& protected_set) {
    check_target(model, target, protected_set);
    const RowSpace space(model.h);
    const Mask prot = protected_mask(model, protected_set);
    const Eigen::Index t = model.row_of(target);
    const RowSpace::Flat root = protected_flat(space, prot);
    if (root.members & bit(static_cast<std::size_t>(t))) return std::nullopt;

    const std::optional<Eigen::VectorXd> c = l1_minimize(model.h, t, prot);
    if (!c) return std::nullopt;
    const Eigen::VectorXd a = model.h * *c;
    const double scale = std::max(1.0, a.lpNorm<Eigen::Infinity>());

    std::optional<RowSpace::Flat> best;
    for (double threshold = 1e-2; threshold >= 1e-10; threshold *= 0.1) {
        RowSpace::Flat flat = root;
        bool feasible = true;
        for (Eigen::Index r = 0; r < model.row_count() && feasible; ++r) {
            if (r == t || (flat.members & bit(static_cast<std::size_t>(r)))) continue;
            if (std::abs(a(r)) <= threshold * scale) {
                flat = space.extend(flat, r);
                feasible = !(flat.members & bit(static_cast<std::size_t>(t)));
            }
        }
        if (!feasible) continue;
        flat = grow_flat(space, std::move(flat), t);
        if (!best || std::popcount(flat.members) > std::popcount(best->members)) best = std::move(flat);
    }
    if (!best) best = grow_flat(space, root, t);
    return witness_from_flat(model, space, *best, t);
}

std::optional<AttackVector> exact_min_attack(const DcModel& model, std::size_t target,
                                             const std::vector<std::size_t>& protected_set, std::size_t row_limit) {
    check_target(model, target, protected_set);
    if (static_cast<std::size_t>(model.row_count()) > row_limit) {
        throw PreconditionError("exact search limited to " + std::to_string(row_limit) + " active rows, model has " +
                                std::to_string(model.row_count()));
    }
    const RowSpace space(model.h);
    const Eigen::Index t = model.row_of(target);
    const RowSpace::Flat root = protected_flat(space, protected_mask(model, protected_set));
    if (root.members & bit(static_cast<std::size_t>(t))) return std::nullopt;

    std::size_t bound = static_cast<std::size_t>(model.row_count());
    if (const auto heuristic = relaxed_attack(model, target, protected_set)) bound = heuristic->cardinality();

    MinimumCocircuitSearch search(space, t, bound);
    const std::optional<RowSpace::Flat> flat = search.run(root);
    if (!flat) throw Error("exact search found no attack although the target is unprotected");
    return witness_from_flat(model, space, *flat, t);
}

AttackVector scale_attack(const AttackVector& attack, std::size_t target, double magnitude) {
    AttackVector out = attack;
    const double base = attack.a(static_cast<Eigen::Index>(target));
    if (base == 0.0) throw PreconditionError("attack does not touch its target");
    out.a *= magnitude / base;
    out.c *= magnitude / base;
    if (magnitude == 0.0) {
        out.unaffected.insert(out.unaffected.end(), out.support.begin(), out.support.end());
        std::sort(out.unaffected.begin(), out.unaffected.end());
        out.support.clear();
    }
    return out;
}

AttackVector synth_attack(const DcModel& model, const AttackSpec& spec) {
    check_target(model, spec.target, spec.protected_set);
    if (spec.magnitude == 0.0) {
        AttackVector zero;
        zero.a = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.measurement_count));
        zero.c = Eigen::VectorXd::Zero(model.state_count());
        zero.unaffected = model.rows;
        return zero;
    }
    const auto witness = exact_min_attack(model, spec.target, spec.protected_set);
    if (!witness) {
        throw Infeasible("measurement " + std::to_string(spec.target + 1) +
                         " cannot be attacked stealthily: every attack touches a protected row");
    }
    return scale_attack(*witness, spec.target, spec.magnitude);
}

SecurityMetricReport security_metric_exact(const DcModel& model, const std::vector<std::size_t>& protected_set,
                                           const ExactSearchOptions& options) {
    if (static_cast<std::size_t>(model.row_count()) > options.row_limit) {
        throw PreconditionError("exact search limited to " + std::to_string(options.row_limit) +
                                " active rows, model has " + std::to_string(model.row_count()));
    }
    if (numerical_rank(model.h) < model.state_count()) throw NotObservable("DC model is not full column rank");

    const auto targets = unprotected_targets(model, protected_set);
    SecurityMetricReport report;
    report.method = MetricMethod::Exact;
    report.entries.resize(targets.size());
    for_each_parallel(targets.size(), options.threads, [&](std::size_t i) {
        MetricEntry& entry = report.entries[i];
        entry.k = targets[i];
        entry.witness = exact_min_attack(model, targets[i], protected_set, options.row_limit);
        if (entry.witness) entry.alpha = entry.witness->cardinality();
    });
    return report;
}

SecurityMetricReport security_metric_relaxation(const DcModel& model, const std::vector<std::size_t>& protected_set) {
    SecurityMetricReport report;
    report.method = MetricMethod::Relaxation;
    for (std::size_t k : unprotected_targets(model, protected_set)) {
        MetricEntry entry;
        entry.k = k;
        entry.witness = relaxed_attack(model, k, protected_set);
        if (entry.witness) entry.alpha = entry.witness->cardinality();
        report.entries.push_back(std::move(entry));
    }
    return report;
}

bool verify_rank_lemma(const DcModel& model, const AttackVector& attack) {
    if (attack.support.empty()) throw PreconditionError("rank certificate needs a nonzero attack");
    const Eigen::Index n = model.state_count();
    std::vector<Eigen::Index> zero_rows;
    std::vector<Eigen::Index> support_rows;
    for (Eigen::Index r = 0; r < model.row_count(); ++r) {
        const double value = attack.a(static_cast<Eigen::Index>(model.rows[static_cast<std::size_t>(r)]));
        (std::abs(value) < kAttackZeroTolerance ? zero_rows : support_rows).push_back(r);
    }
    auto stack = [&](const std::vector<Eigen::Index>& rows, std::optional<Eigen::Index> extra) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()) + (extra ? 1 : 0), n);
        for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = model.h.row(rows[i]);
        if (extra) m.row(m.rows() - 1) = model.h.row(*extra);
        return m;
    };
    if (numerical_rank(stack(zero_rows, std::nullopt)) != n - 1) return false;
    return std::all_of(support_rows.begin(), support_rows.end(),
                       [&](Eigen::Index r) { return numerical_rank(stack(zero_rows, r)) == n; });
}

DcModel perturb_line(const DcModel& model, const Network& network, std::size_t branch, double factor) {
    const Branch& br = network.branches().at(branch);
    if (!br.in_service) throw PreconditionError("branch is out of service");
    Eigen::VectorXd flow = Eigen::VectorXd::Zero(model.state_count());
    const double b = br.lossless_susceptance();
    if (const Eigen::Index col = angle_column_of(network, br.from_bus); col >= 0) flow(col) = -b;
    if (const Eigen::Index col = angle_column_of(network, br.to_bus); col >= 0) flow(col) = b;

    DcModel out = model;
    for (Eigen::Index r = 0; r < model.row_count(); ++r) {
        const MeasurementKind& kind = model.kinds[static_cast<std::size_t>(r)];
        if (kind.type == MeasurementType::ActiveFlow) {
            const bool on_branch = (kind.bus == br.from_bus && kind.to_bus == br.to_bus) ||
                                   (kind.bus == br.to_bus && kind.to_bus == br.from_bus);
            if (on_branch) out.h.row(r) *= factor;
        } else if (kind.bus == br.from_bus) {
            out.h.row(r) += (factor - 1.0) * flow.transpose();
        } else if (kind.bus == br.to_bus) {
            out.h.row(r) -= (factor - 1.0) * flow.transpose();
        }
    }
    return out;
}

bool check_model_invariance(const DcModel& model, const DcModel& perturbed, const AttackVector& attack) {
    if (model.h.rows() != perturbed.h.rows() || model.h.cols() != perturbed.h.cols() || model.rows != perturbed.rows) {
        throw PreconditionError("perturbed model has a different shape");
    }
    Eigen::VectorXd a_dc(model.row_count());
    for (Eigen::Index r = 0; r < model.row_count(); ++r) {
        const std::size_t k = model.rows[static_cast<std::size_t>(r)];
        a_dc(r) = attack.a(static_cast<Eigen::Index>(k));
        const auto diff = (perturbed.h.row(r) - model.h.row(r)).lpNorm<Eigen::Infinity>();
        const bool changed = diff > 1e-12 * (1.0 + model.h.row(r).lpNorm<Eigen::Infinity>());
        if (changed && model.kinds[static_cast<std::size_t>(r)].is_flow() && std::abs(a_dc(r)) >= kAttackZeroTolerance) {
            throw PreconditionError("perturbed flow row " + std::to_string(k + 1) + " is in the attack support");
        }
        for (Eigen::Index j = 0; j < model.state_count(); ++j) {
            if ((model.h(r, j) == 0.0) != (perturbed.h(r, j) == 0.0)) {
                throw PreconditionError("perturbation changes the sparsity pattern of row " + std::to_string(k + 1));
            }
        }
    }
    const Eigen::VectorXd c = perturbed.h.colPivHouseholderQr().solve(a_dc);
    const double residual = (perturbed.h * c - a_dc).lpNorm<Eigen::Infinity>();
    return residual <= 1e-8 * std::max(1.0, a_dc.lpNorm<Eigen::Infinity>());
}

std::vector<SaturationViolation> check_saturation(const Network& network, const MeasurementSet& set,
                                                  const Eigen::VectorXd& z_a, const std::vector<std::size_t>& attacked) {
    if (z_a.size() != static_cast<Eigen::Index>(set.size())) throw PreconditionError("z_a does not match the set");
    std::vector<std::size_t> indices = attacked;
    if (indices.empty()) {
        for (std::size_t k = 0; k < set.size(); ++k) indices.push_back(k);
    }
    std::vector<SaturationViolation> out;
    for (std::size_t k : indices) {
        const MeasurementKind& kind = set[k].kind;
        if (kind.type != MeasurementType::ActiveFlow) continue;
        const auto it = std::find_if(network.branches().begin(), network.branches().end(), [&](const Branch& br) {
            return br.in_service && ((br.from_bus == kind.bus && br.to_bus == kind.to_bus) ||
                                     (br.from_bus == kind.to_bus && br.to_bus == kind.bus));
        });
        if (it == network.branches().end()) throw SemanticError("no branch for " + kind.label());
        const double limit = std::abs(it->series_susceptance());
        const double value = z_a(static_cast<Eigen::Index>(k));
        if (std::abs(value) > limit) out.push_back({k, value, limit, limit - std::abs(value)});
    }
    return out;
}

MeasurementSet apply_attack(const MeasurementSet& set, const Eigen::VectorXd& a) {
    if (a.size() != static_cast<Eigen::Index>(set.size())) throw PreconditionError("attack does not match the set");
    MeasurementSet out = set;
    for (std::size_t k = 0; k < set.size(); ++k) {
        const double ak = a(static_cast<Eigen::Index>(k));
        if (ak == 0.0) continue;
        if (set[k].is_pseudo) {
            throw PreconditionError("attack touches pseudo-measurement " + std::to_string(k + 1));
        }
        out[k].value += ak;
    }
    return out;
}

MeasurementSet apply_attack(const MeasurementSet& set, const AttackVector& attack) {
    return apply_attack(set, attack.a);
}

std::vector<std::size_t> parse_protected_set(std::string_view text) {
    std::vector<std::size_t> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        const std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string_view::npos) continue;
        const std::size_t last = line.find_last_not_of(" \t\r");
        const std::string_view token = line.substr(first, last - first + 1);
        std::size_t value = 0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc() || ptr != token.data() + token.size() || value == 0) {
            throw ParseError("expected a 1-based measurement index, got '" + std::string(token) + "'", line_no,
                             first + 1);
        }
        out.push_back(value - 1);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::map<std::size_t, std::string> parse_rtu_groups(std::string_view text) {
    std::map<std::size_t, std::string> groups;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    auto trim = [](std::string_view s) {
        const std::size_t a = s.find_first_not_of(" \t\r");
        if (a == std::string_view::npos) return std::string_view{};
        return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
    };
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        const std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        const std::size_t colon = line.find(':');
        if (colon == std::string_view::npos) throw ParseError("expected 'rtu_id: k1,k2,...'", line_no, 1);
        const std::string rtu(trim(line.substr(0, colon)));
        if (rtu.empty()) throw ParseError("empty RTU id", line_no, 1);
        std::size_t item_start = colon + 1;
        while (item_start <= line.size()) {
            const std::size_t comma = std::min(line.find(',', item_start), line.size());
            const std::string_view item = trim(line.substr(item_start, comma - item_start));
            std::size_t k = 0;
            const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), k);
            if (item.empty() || ec != std::errc() || ptr != item.data() + item.size() || k == 0) {
                throw ParseError("expected a 1-based measurement index", line_no, item_start + 1);
            }
            if (!groups.emplace(k - 1, rtu).second) {
                throw ParseError("measurement " + std::to_string(k) + " assigned to two RTUs", line_no, item_start + 1);
            }
            item_start = comma + 1;
        }
    }
    return groups;
}

std::size_t count_rtus(const AttackVector& attack, const std::map<std::size_t, std::string>& groups) {
    std::set<std::string> rtus;
    for (std::size_t k : attack.support) {
        const auto it = groups.find(k);
        rtus.insert(it != groups.end() ? it->second : "#" + std::to_string(k));
    }
    return rtus.size();
}

}  // namespace gridsec
