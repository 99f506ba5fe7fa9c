#ifndef EITKIT_CEM_HPP
#define EITKIT_CEM_HPP

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eitkit/levels.hpp"
#include "eitkit/mesh.hpp"

namespace eit {

using SparseMat = Eigen::SparseMatrix<double>;

// Piecewise constant conductivity, one value per mesh element [1/Ohm].
struct Conductivity {
    Eigen::VectorXd values;

    static Conductivity homogeneous(int n_elements, double value);
    void validate() const;  // all entries finite and > 0
};

// Per-electrode contact impedance [Ohm].
struct ContactImpedances {
    Eigen::VectorXd z;

    static ContactImpedances uniform(int n_electrodes, double value);
    void validate() const;
};

inline constexpr double kDefaultContactImpedance = 1e-6;  // Ohm
// Injection amplitude sets the signal-to-noise ratio because the noise
// covariance below is an absolute function of the reference voltages; 1 A
// puts the simulated voltages on the O(1)-volt scale that formula assumes.
inline constexpr double kDefaultInjectionCurrent = 1.0;          // A
inline constexpr double kDefaultBackgroundConductivity = 0.745;  // 1/Ohm

// A set of injection patterns: K rows of per-electrode currents [A]. Each row
// sums to zero and touches only active electrodes. pattern_ids map rows back
// to the canonical schedule so frames solved at different levels stay
// comparable.
struct CurrentPatternSet {
    Eigen::MatrixXd patterns;  // K x L
    std::vector<std::uint8_t> active_electrodes;
    std::vector<int> pattern_ids;
    int level = 1;

    int n_patterns() const { return static_cast<int>(patterns.rows()); }
    int n_electrodes() const { return static_cast<int>(patterns.cols()); }
    void validate() const;
};

// Canonical schedule at a given level: surviving patterns only, currents of
// `amplitude` amperes.
CurrentPatternSet make_challenge_patterns(int n_electrodes = 32,
                                          double amplitude = kDefaultInjectionCurrent,
                                          int level = 1);

// Electrode (and optionally interior) potentials for each solved pattern.
struct ElectrodeFrame {
    Eigen::MatrixXd electrode_potentials;  // K x L [V]
    Eigen::MatrixXd interior;              // K x N, kept only on request
    std::vector<int> pattern_ids;
};

// Flattened adjacent-difference measurements, pattern-major.
struct MeasurementVector {
    Eigen::VectorXd values;
    int level = 1;
    std::vector<int> pattern_ids;
};

// Diagonal Gaussian noise covariance over a measurement vector.
struct NoiseModel {
    Eigen::VectorXd diag;  // variances, strictly positive

    void validate() const;
};

// diag_i = 0.05*|u_ref_i| + 0.01*max_i|u_ref_i|. Absolute values keep the
// variances positive for signed differential data.
NoiseModel build_noise_model(const MeasurementVector& u_ref);

// Instrumentation: counts factorizations and triangular-solve pairs (one per
// right-hand side column) across all CEMSystem instances.
struct SolveStats {
    static std::atomic<long> factorizations;
    static std::atomic<long> solves;
    static void reset();
};

// The assembled (N+L+1) x (N+L+1) block system
//
//   [ A(sigma)+B   C   0 ] [u]       [0]
//   [ C^T          D   1 ] [U]   =   [I]
//   [ 0^T          1^T  0 ] [lambda] [0]
//
// with A_ij = int sigma grad(phi_i).grad(phi_j), B the contact mass terms,
// C_il = -(1/z_l) int_{e_l} phi_i, D_ll = |e_l|/z_l, and a Lagrange
// multiplier enforcing sum(U) = 0. Factorized once at construction; the
// factorization is reused for every right-hand side. Immutable afterwards;
// concurrent solves are serialized behind the handle.
class CEMSystem {
public:
    CEMSystem(const TriMesh& mesh, const Conductivity& sigma, const ContactImpedances& z);

    const SparseMat& matrix() const { return matrix_; }
    int n_vertices() const { return n_vertices_; }
    int n_electrodes() const { return n_electrodes_; }
    int dim() const { return n_vertices_ + n_electrodes_ + 1; }

    // Solves for all columns of rhs. Throws NumericalError if singular.
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

private:
    int n_vertices_ = 0;
    int n_electrodes_ = 0;
    SparseMat matrix_;
    std::unique_ptr<Eigen::SparseLU<SparseMat>> lu_;
    mutable std::mutex solve_mutex_;
};

CEMSystem assemble_system(const TriMesh& mesh, const Conductivity& sigma,
                          const ContactImpedances& z);

// Solves the block system for every pattern (one factorization, K solves).
ElectrodeFrame solve_forward(const CEMSystem& system, const CurrentPatternSet& patterns,
                             bool keep_interior = false);

// Emits U_{l+1} - U_l over consecutive electrodes, pattern-major, keeping only
// the rows surviving at the level. The frame must cover every active pattern.
MeasurementVector apply_measurement_operator(const ElectrodeFrame& frame,
                                             const LevelConfig& cfg);

// Least-squares fit of a homogeneous background conductivity against level-1
// reference measurements, by bracketed 1-D minimization over [1e-3, 1e3].
double fit_background_conductivity(const TriMesh& mesh, const ContactImpedances& z,
                                   const CurrentPatternSet& patterns,
                                   const MeasurementVector& u_ref);

// Measurement file I/O: {level, pattern_ids, values, ...} plus the pattern
// set for provenance.
void save_measurement(const MeasurementVector& m, const CurrentPatternSet& patterns,
                      const std::filesystem::path& path,
                      const Eigen::MatrixXd* electrode_potentials = nullptr);
MeasurementVector load_measurement(const std::filesystem::path& path);

}  // namespace eit

#endif
