#include "eitkit/priors.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace eit {

void PriorMatrix::add_scaled(Eigen::MatrixXd& target, double alpha) const {
    if (alpha == 0.0) return;
    if (uses_dense()) {
        target.noalias() += alpha * dense;
    } else {
        for (int k = 0; k < sparse.outerSize(); ++k) {
            for (SparseMat::InnerIterator it(sparse, k); it; ++it) {
                target(it.row(), it.col()) += alpha * it.value();
            }
        }
    }
}

Eigen::VectorXd PriorMatrix::apply(const Eigen::VectorXd& x) const {
    return uses_dense() ? Eigen::VectorXd(dense * x) : Eigen::VectorXd(sparse * x);
}

PriorMatrix build_fsm(const TriMesh& mesh) {
    const auto adjacency = element_adjacency(mesh);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < mesh.n_elements(); ++i) {
        const auto& neighbours = adjacency[static_cast<std::size_t>(i)];
        trips.emplace_back(i, i, static_cast<double>(neighbours.size()));
        for (int j : neighbours) trips.emplace_back(i, j, -1.0);
    }
    PriorMatrix prior;
    prior.kind = PriorKind::FSM;
    prior.sparse.resize(mesh.n_elements(), mesh.n_elements());
    prior.sparse.setFromTriplets(trips.begin(), trips.end());
    prior.sparse.makeCompressed();
    return prior;
}

Eigen::MatrixXd sm_kernel_matrix(const TriMesh& mesh, double a, double b) {
    const int M = mesh.n_elements();
    std::vector<Vec2> centroids(static_cast<std::size_t>(M));
    for (int e = 0; e < M; ++e) centroids[static_cast<std::size_t>(e)] = mesh.element_centroid(e);

    Eigen::MatrixXd kernel(M, M);
    const double inv_2b2 = 1.0 / (2.0 * b * b);
    for (int i = 0; i < M; ++i) {
        kernel(i, i) = a;
        for (int j = i + 1; j < M; ++j) {
            const Vec2 d = centroids[static_cast<std::size_t>(i)] -
                           centroids[static_cast<std::size_t>(j)];
            const double v = a * std::exp(-dot(d, d) * inv_2b2);
            kernel(i, j) = v;
            kernel(j, i) = v;
        }
    }
    return kernel;
}

namespace {

// lambda_max / lambda_min via power iteration on the kernel and inverse
// iteration through its factorization
double estimate_condition(const Eigen::MatrixXd& kernel, const Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::Index n = kernel.rows();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n).normalized();
    double lambda_max = 0.0;
    for (int it = 0; it < 30; ++it) {
        v = (kernel * v).normalized();
    }
    lambda_max = v.dot(kernel * v);

    Eigen::VectorXd w = Eigen::VectorXd::Ones(n).normalized();
    for (int it = 0; it < 30; ++it) {
        w = llt.solve(w).normalized();
    }
    const double lambda_min = w.dot(kernel * w);
    if (lambda_min <= 0.0) return std::numeric_limits<double>::infinity();
    return lambda_max / lambda_min;
}

}  // namespace

PriorMatrix build_sm(const TriMesh& mesh, double a, double b, double jitter) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw ConfigError("SM prior: kernel parameters must satisfy a > 0, b > 0");
    }
    Eigen::MatrixXd kernel = sm_kernel_matrix(mesh, a, b);
    if (jitter > 0.0) kernel.diagonal().array() += jitter;

    Eigen::LLT<Eigen::MatrixXd> llt(kernel);
    if (llt.info() != Eigen::Success) {
        if (jitter > 0.0) {
            throw NumericalError("SM prior: kernel matrix is not positive definite even with "
                                 "jitter " + std::to_string(jitter) + "; increase it or coarsen "
                                 "the mesh");
        }
        throw NumericalError("SM prior: kernel matrix is numerically singular; pass a diagonal "
                             "jitter (e.g. 1e-10*a)");
    }

    if (jitter == 0.0) {
        const double cond = estimate_condition(kernel, llt);
        if (cond > 1e14) {
            throw NumericalError("SM prior: kernel condition number ~" + std::to_string(cond) +
                                 " exceeds 1e14; pass a diagonal jitter (e.g. 1e-10*a)");
        }
    }

    const Eigen::Index M = kernel.rows();
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(M, M));

    PriorMatrix prior;
    prior.kind = PriorKind::SM;
    prior.kernel_a = a;
    prior.kernel_b = b;
    prior.dense = 0.5 * (inv + inv.transpose());
    return prior;
}

PriorMatrix build_lm(const MeasurementJacobian& jac, const NoiseModel& noise) {
    noise.validate();
    if (noise.diag.size() != jac.matrix.rows()) {
        throw ValidationError("LM prior: noise model has " + std::to_string(noise.diag.size()) +
                              " rows, Jacobian has " + std::to_string(jac.matrix.rows()));
    }
    const Eigen::Index M = jac.matrix.cols();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(M));
    for (Eigen::Index j = 0; j < M; ++j) {
        double d = 0.0;  // plain serial accumulation, reproducible entry by entry
        for (Eigen::Index r = 0; r < jac.matrix.rows(); ++r) {
            d += jac.matrix(r, j) * jac.matrix(r, j) / noise.diag[r];
        }
        trips.emplace_back(static_cast<int>(j), static_cast<int>(j), d);
    }
    PriorMatrix prior;
    prior.kind = PriorKind::LM;
    prior.sparse.resize(M, M);
    prior.sparse.setFromTriplets(trips.begin(), trips.end());
    prior.sparse.makeCompressed();
    return prior;
}

}  // namespace eit
