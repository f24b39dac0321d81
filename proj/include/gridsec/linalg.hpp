#pragma once

#include <Eigen/Dense>

namespace gridsec {

/// Default relative pivot tolerance for rank decisions.
inline constexpr double kRankTolerance = 1e-9;

/// Numerical rank by column-pivoted QR; pivots at or below rel_tol times the
/// largest pivot count as zero.
inline Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double rel_tol = kRankTolerance) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    qr.setThreshold(rel_tol);
    return qr.rank();
}

}  // namespace gridsec
