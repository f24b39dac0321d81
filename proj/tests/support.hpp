// Shared fixtures and independent reference computations for the test suites.
// Nothing here calls into the code paths it is used to check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsec/measurement.hpp"
#include "gridsec/network.hpp"

namespace testing {

inline std::string data_path(const std::string& name) { return std::string(GRIDSEC_DATA_DIR) + "/" + name; }

inline gridsec::Network load_case(const std::string& name) { return gridsec::read_case_file(data_path(name)); }

/// Central differences of eval_h, step h.
inline Eigen::MatrixXd fd_jacobian(const gridsec::Network& net, const gridsec::MeasurementSet& set,
                                   const gridsec::StateVector& x, double h = 1e-5) {
    const Eigen::VectorXd x0 = x.to_vector(net);
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(set.size()), x0.size());
    for (Eigen::Index j = 0; j < x0.size(); ++j) {
        Eigen::VectorXd xp = x0, xm = x0;
        xp(j) += h;
        xm(j) -= h;
        jac.col(j) = (gridsec::eval_h(net, set, gridsec::StateVector::from_vector(net, xp)) -
                      gridsec::eval_h(net, set, gridsec::StateVector::from_vector(net, xm))) /
                     (2 * h);
    }
    return jac;
}

inline gridsec::StateVector random_state(const gridsec::Network& net, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> v(0.9, 1.1), th(-0.3, 0.3);
    gridsec::StateVector x = gridsec::StateVector::flat_start(net);
    for (Eigen::Index i = 0; i < x.magnitude.size(); ++i) {
        x.magnitude(i) = v(rng);
        if (static_cast<std::size_t>(i) != net.reference_index()) x.angle(i) = th(rng);
    }
    return x;
}

inline Eigen::Index lu_rank(const Eigen::MatrixXd& m) {
    if (m.rows() == 0) return 0;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(1e-9);
    return lu.rank();
}

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& h, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), h.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = h.row(rows[i]);
    return out;
}

struct BruteForceAttack {
    std::size_t alpha = 0;
    std::vector<Eigen::Index> support;  ///< DC row positions, ascending
    Eigen::VectorXd a;                  ///< per DC row, a_target = 1
};

/// Minimum |supp(Hc)| subject to (Hc)_t = 1 and (Hc)_p = 0 on protected rows,
/// by enumerating every zero set Z with P in Z, t not in Z. Z is feasible iff
/// h_t is outside the row space of H_Z; the optimum takes the largest such Z,
/// breaking ties towards the lexicographically smallest complement.
inline std::optional<BruteForceAttack> brute_force_alpha(const Eigen::MatrixXd& h, Eigen::Index target,
                                                         const std::vector<Eigen::Index>& protected_rows) {
    const auto m = static_cast<int>(h.rows());
    std::uint64_t pmask = 0;
    for (Eigen::Index p : protected_rows) pmask |= std::uint64_t{1} << p;
    std::optional<BruteForceAttack> best;
    for (std::uint64_t z = 0; z < (std::uint64_t{1} << m); ++z) {
        if ((z & pmask) != pmask || (z >> target) & 1) continue;
        std::vector<Eigen::Index> zero, comp;
        for (int r = 0; r < m; ++r) ((z >> r) & 1 ? zero : comp).push_back(r);
        if (best && comp.size() > best->alpha) continue;
        const Eigen::MatrixXd hz = select_rows(h, zero);
        Eigen::MatrixXd hzt(hz.rows() + 1, h.cols());
        hzt << hz, h.row(target);
        if (lu_rank(hzt) == lu_rank(hz)) continue;
        // Attack supported inside comp: any kernel vector of H_Z with h_t c != 0.
        Eigen::MatrixXd kernel;
        if (zero.empty()) {
            kernel = Eigen::MatrixXd::Identity(h.cols(), h.cols());
        } else {
            Eigen::FullPivLU<Eigen::MatrixXd> lu(hz);
            lu.setThreshold(1e-9);
            kernel = lu.kernel();
        }
        const Eigen::RowVectorXd proj = h.row(target) * kernel;
        Eigen::Index col = 0;
        proj.cwiseAbs().maxCoeff(&col);
        const Eigen::VectorXd c = kernel.col(col) / proj(col);
        Eigen::VectorXd a = h * c;
        std::vector<Eigen::Index> support;
        for (int r = 0; r < m; ++r) {
            if (std::abs(a(r)) < 1e-9) {
                a(r) = 0.0;
            } else {
                support.push_back(r);
            }
        }
        // Only hyperplanes give exactly comp as support; smaller supports show up
        // as their own, larger, zero sets.
        if (support.size() != comp.size()) continue;
        if (!best || support.size() < best->alpha || (support.size() == best->alpha && support < best->support)) {
            best = BruteForceAttack{support.size(), support, a};
        }
    }
    return best;
}

/// Standard normal quantile by bisection on erfc.
inline double normal_quantile(double p) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace testing
