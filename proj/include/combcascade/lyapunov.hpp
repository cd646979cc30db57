#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace combcascade {

/// Solve M X + X M^T + D = 0 for symmetric X (Bartels-Stewart via complex
/// Schur). Requires M Hurwitz; the caller checks stability.
inline Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& M, const Eigen::MatrixXd& D) {
    const int n = static_cast<int>(M.rows());
    if (M.cols() != n || D.rows() != n || D.cols() != n)
        throw std::invalid_argument("solve_lyapunov: dimension mismatch");

    Eigen::ComplexSchur<Eigen::MatrixXcd> schur(M.cast<std::complex<double>>());
    if (schur.info() != Eigen::Success) throw std::runtime_error("solve_lyapunov: Schur failed");
    const Eigen::MatrixXcd T = schur.matrixT();
    const Eigen::MatrixXcd U = schur.matrixU();

    // T Y + Y T^H + Q = 0 with Q = U^H D U. Solve columns back to front:
    // (T + conj(T_kk) I) y_k = -q_k - sum_{j>k} conj(T_kj) y_j.
    const Eigen::MatrixXcd Q = U.adjoint() * D.cast<std::complex<double>>() * U;
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
    Eigen::MatrixXcd A(n, n);
    for (int k = n - 1; k >= 0; --k) {
        Eigen::VectorXcd rhs = -Q.col(k);
        for (int j = k + 1; j < n; ++j) rhs -= std::conj(T(k, j)) * Y.col(j);
        A = T;
        A.diagonal().array() += std::conj(T(k, k));
        Y.col(k) = A.triangularView<Eigen::Upper>().solve(rhs);
    }
    const Eigen::MatrixXcd Xc = U * Y * U.adjoint();
    Eigen::MatrixXd X = Xc.real();
    return 0.5 * (X + X.transpose());
}

}  // namespace combcascade
