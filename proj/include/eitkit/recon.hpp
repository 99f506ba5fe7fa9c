#ifndef EITKIT_RECON_HPP
#define EITKIT_RECON_HPP

#include <map>

#include <Eigen/Cholesky>

#include "eitkit/priors.hpp"
#include "eitkit/sim.hpp"

namespace eit {

// Regularization strengths for one reconstructor; at least one must be > 0.
struct RegWeights {
    double alpha_fsm = 0.0;
    double alpha_sm = 0.0;
    double alpha_lm = 0.0;
    std::string label;

    void validate() const;
};

struct PriorSet {
    PriorMatrix fsm;
    PriorMatrix sm;
    PriorMatrix lm;
};

// One-step linearized Tikhonov reconstructor: the normal matrix
// J^T Sigma^-1 J + sum_p alpha_p P_p is assembled and factorized once;
// each reconstruction is then a matrix-vector product and one solve.
// Immutable after construction; concurrent reconstruct calls are safe.
class Reconstructor {
public:
    Reconstructor(const MeasurementJacobian& jac, const NoiseModel& noise,
                  const PriorSet& priors, const RegWeights& weights);

    // Exact minimizer of the regularized least squares problem. Zero input
    // maps to exactly zero output. Every call refines until the relative
    // backward error of the normal equations is below 1e-10 and throws if
    // that cannot be reached.
    Eigen::VectorXd reconstruct(const MeasurementVector& delta_u) const;

    // |Hx - b| / (|H|_inf |x| + |b|), recomputable per call for verification
    double residual(const MeasurementVector& delta_u, const Eigen::VectorXd& solution) const;

    int level() const { return level_; }
    const RegWeights& weights() const { return weights_; }

private:
    int level_;
    RegWeights weights_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::MatrixXd normal_;        // kept for residual checks and refinement
    double normal_inf_norm_ = 0.0;
    Eigen::MatrixXd jt_sigma_inv_;  // M x rows
};

// Five reconstructors per level, label order fixed: fsm, sm, sm+lm,
// fsm+sm+lm-weak, fsm+sm+lm-strong.
struct ReconstructionEnsemble {
    int level = 1;
    std::vector<Reconstructor> members;
};

inline constexpr int kEnsembleSize = 5;

ReconstructionEnsemble build_ensemble(const MeasurementJacobian& jac, const NoiseModel& noise,
                                      const PriorSet& priors,
                                      const std::vector<RegWeights>& weights);

// Applies every member and interpolates to the pixel grid; output order
// follows the member labels.
std::vector<PixelGrid> reconstruct_ensemble(const ReconstructionEnsemble& ensemble,
                                            const MeasurementVector& delta_u,
                                            const MeshToPixel& interpolator);

// Rule-based 3-class segmentation: value < t_low -> resistive (1),
// value > t_high -> conductive (2), else background; disk mask applied.
ClassMap segment(const PixelGrid& image, double t_low, double t_high);

// Two-sided Otsu thresholds over the negative/positive in-disk values.
// Sides without any appreciable spread get a threshold beyond the data so
// nothing is classified there.
std::pair<double, double> otsu_thresholds(const PixelGrid& image);

// Weights config file: {"<level>": [{label, alpha_fsm, alpha_sm, alpha_lm} x5]}.
using WeightsConfig = std::map<int, std::vector<RegWeights>>;

WeightsConfig default_weights_config();
WeightsConfig load_weights_config(const std::filesystem::path& path);
void save_weights_config(const WeightsConfig& config, const std::filesystem::path& path);

}  // namespace eit

#endif
