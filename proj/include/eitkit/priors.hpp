#ifndef EITKIT_PRIORS_HPP
#define EITKIT_PRIORS_HPP

#include "eitkit/jacobian.hpp"

namespace eit {

enum class PriorKind { FSM, SM, LM };

// Symmetric PSD M x M regularization matrix P = L^T L. FSM and LM are sparse
// (graph Laplacian, diagonal); SM is the dense inverse of a Gaussian kernel.
struct PriorMatrix {
    PriorKind kind = PriorKind::FSM;
    SparseMat sparse;       // FSM, LM
    Eigen::MatrixXd dense;  // SM
    double kernel_a = 0.0;  // SM parameters
    double kernel_b = 0.0;

    bool uses_dense() const { return kind == PriorKind::SM; }
    int size() const {
        return uses_dense() ? static_cast<int>(dense.rows()) : static_cast<int>(sparse.rows());
    }
    // target += alpha * P
    void add_scaled(Eigen::MatrixXd& target, double alpha) const;
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

// First-order smoothness: graph Laplacian over element adjacency, deg(i) on
// the diagonal and -1 for edge-adjacent pairs.
PriorMatrix build_fsm(const TriMesh& mesh);

inline constexpr double kDefaultSmKernelAmplitude = 0.025;
inline constexpr double kDefaultSmKernelLength = 0.4 * 0.115;

// Smoothness prior: inverse of the Gaussian kernel covariance
// Sigma_ij = a*exp(-|x_i-x_j|^2/(2b^2)) over element centroids. `jitter` is
// added to the kernel diagonal before inversion; leave at 0 unless the build
// reports ill-conditioning.
PriorMatrix build_sm(const TriMesh& mesh, double a = kDefaultSmKernelAmplitude,
                     double b = kDefaultSmKernelLength, double jitter = 0.0);

// Returns the Gaussian kernel matrix itself (useful for verifying the
// inverse round trip).
Eigen::MatrixXd sm_kernel_matrix(const TriMesh& mesh, double a = kDefaultSmKernelAmplitude,
                                 double b = kDefaultSmKernelLength);

// Levenberg-Marquardt / NOSER diagonal: diag(J^T Sigma^-1 J). Depends on the
// level through the reduced Jacobian, so it is rebuilt per level.
PriorMatrix build_lm(const MeasurementJacobian& jac, const NoiseModel& noise);

}  // namespace eit

#endif
