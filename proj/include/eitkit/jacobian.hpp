#ifndef EITKIT_JACOBIAN_HPP
#define EITKIT_JACOBIAN_HPP

#include <filesystem>
#include <span>

#include "eitkit/cem.hpp"

namespace eit {

// Sensitivity of all electrode potentials to per-element conductivity
// perturbations around sigma_ref, stored as a (K*L) x M matrix with row
// index k*L + l. Always built at level 1 (full schedule).
struct ElectrodeJacobian {
    Eigen::MatrixXd matrix;
    int n_electrodes = 0;
    int n_patterns = 0;
    std::vector<int> pattern_ids;
    Conductivity sigma_ref;
    std::uint64_t mesh_hash = 0;
    std::uint64_t sigma_hash = 0;
};

// The electrode Jacobian composed with the adjacent-difference operator and
// the level row mask: rows match apply_measurement_operator exactly.
struct MeasurementJacobian {
    Eigen::MatrixXd matrix;
    int level = 1;
    std::vector<int> pattern_ids;
    std::uint64_t mesh_hash = 0;
    std::uint64_t sigma_hash = 0;
};

// Unit-vector construction: one factorization shared with the forward solve,
// then N additional solves with unit right-hand sides; columns assembled from
// the per-element load coefficients. Cost: 1 factorization + (K+N) solves.
ElectrodeJacobian compute_jacobian_fast(const TriMesh& mesh, const Conductivity& sigma_ref,
                                        const ContactImpedances& z,
                                        const CurrentPatternSet& patterns);

// Central finite differences, perturbing one element at a time (2M forward
// solves); intended for small meshes and as an independent oracle.
ElectrodeJacobian compute_jacobian_fd(const TriMesh& mesh, const Conductivity& sigma_ref,
                                      const ContactImpedances& z,
                                      const CurrentPatternSet& patterns, double eps);

// Finite-difference columns for a subset of elements.
Eigen::MatrixXd fd_jacobian_columns(const TriMesh& mesh, const Conductivity& sigma_ref,
                                    const ContactImpedances& z,
                                    const CurrentPatternSet& patterns,
                                    std::span<const int> element_ids, double eps);

// Pure row selection: difference rows of the full Jacobian surviving at the
// level, in apply_measurement_operator order.
MeasurementJacobian reduce_jacobian(const ElectrodeJacobian& jac, const LevelConfig& cfg);

// Binary cache: little-endian doubles with a {rows, cols, level,
// sigma_ref_hash, mesh_hash} header. Loading verifies the hashes.
void save_jacobian_cache(const MeasurementJacobian& jac, const std::filesystem::path& path);
MeasurementJacobian load_jacobian_cache(const std::filesystem::path& path,
                                        std::uint64_t expect_mesh_hash = 0,
                                        std::uint64_t expect_sigma_hash = 0);

std::uint64_t conductivity_hash(const Conductivity& sigma);

}  // namespace eit

#endif
