#include "eitkit/recon.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace eit {

void RegWeights::validate() const {
    if (alpha_fsm < 0 || alpha_sm < 0 || alpha_lm < 0) {
        throw ValidationError("weights '" + label + "': regularization strengths must be >= 0");
    }
    if (alpha_fsm == 0 && alpha_sm == 0 && alpha_lm == 0) {
        throw ValidationError("weights '" + label + "': at least one strength must be > 0");
    }
}

Reconstructor::Reconstructor(const MeasurementJacobian& jac, const NoiseModel& noise,
                             const PriorSet& priors, const RegWeights& weights)
    : level_(jac.level), weights_(weights) {
    weights.validate();
    noise.validate();
    if (noise.diag.size() != jac.matrix.rows()) {
        throw ValidationError("reconstructor: noise model has " +
                              std::to_string(noise.diag.size()) + " rows, Jacobian has " +
                              std::to_string(jac.matrix.rows()));
    }
    const Eigen::Index M = jac.matrix.cols();
    for (const PriorMatrix* p : {&priors.fsm, &priors.sm, &priors.lm}) {
        if (p->size() != M) {
            throw ValidationError("reconstructor: prior size " + std::to_string(p->size()) +
                                  " does not match Jacobian columns " + std::to_string(M));
        }
    }

    jt_sigma_inv_ = jac.matrix.transpose() * noise.diag.cwiseInverse().asDiagonal();
    normal_ = jt_sigma_inv_ * jac.matrix;
    priors.fsm.add_scaled(normal_, weights.alpha_fsm);
    priors.sm.add_scaled(normal_, weights.alpha_sm);
    priors.lm.add_scaled(normal_, weights.alpha_lm);
    normal_ = 0.5 * (normal_ + normal_.transpose().eval());
    normal_inf_norm_ = normal_.cwiseAbs().rowwise().sum().maxCoeff();

    llt_.compute(normal_);
    if (llt_.info() != Eigen::Success) {
        throw NumericalError("reconstructor '" + weights.label +
                             "': regularized normal matrix is not positive definite "
                             "(alpha_fsm=" + std::to_string(weights.alpha_fsm) +
                             ", alpha_sm=" + std::to_string(weights.alpha_sm) +
                             ", alpha_lm=" + std::to_string(weights.alpha_lm) + ")");
    }
}

Eigen::VectorXd Reconstructor::reconstruct(const MeasurementVector& delta_u) const {
    if (delta_u.values.size() != jt_sigma_inv_.cols()) {
        throw ValidationError("reconstruct: measurement has " +
                              std::to_string(delta_u.values.size()) + " rows, expected " +
                              std::to_string(jt_sigma_inv_.cols()) + " at level " +
                              std::to_string(level_));
    }
    const Eigen::VectorXd b = jt_sigma_inv_ * delta_u.values;
    if (b.isZero(0.0)) {
        return Eigen::VectorXd::Zero(normal_.rows());
    }
    auto backward_error = [&](const Eigen::VectorXd& x) {
        return (normal_ * x - b).norm() / (normal_inf_norm_ * x.norm() + b.norm());
    };
    Eigen::VectorXd x = llt_.solve(b);
    // iterative refinement until the normal-equation contract holds
    double res = backward_error(x);
    for (int iter = 0; iter < 4 && res >= 1e-10; ++iter) {
        const Eigen::VectorXd better = x + llt_.solve(b - normal_ * x);
        const double next = backward_error(better);
        if (next >= res) break;
        x = better;
        res = next;
    }
    if (res >= 1e-10) {
        std::ostringstream os;
        os << "reconstruct '" << weights_.label << "': normal-equation backward error stalled at "
           << res << "; the weights make the system too ill-conditioned";
        throw NumericalError(os.str());
    }
    return x;
}

double Reconstructor::residual(const MeasurementVector& delta_u,
                               const Eigen::VectorXd& solution) const {
    const Eigen::VectorXd b = jt_sigma_inv_ * delta_u.values;
    const double denom = normal_inf_norm_ * solution.norm() + b.norm();
    if (denom == 0.0) return 0.0;
    return (normal_ * solution - b).norm() / denom;
}

ReconstructionEnsemble build_ensemble(const MeasurementJacobian& jac, const NoiseModel& noise,
                                      const PriorSet& priors,
                                      const std::vector<RegWeights>& weights) {
    if (static_cast<int>(weights.size()) != kEnsembleSize) {
        throw ConfigError("ensemble requires exactly " + std::to_string(kEnsembleSize) +
                          " weight sets, got " + std::to_string(weights.size()));
    }
    ReconstructionEnsemble ensemble;
    ensemble.level = jac.level;
    for (const auto& w : weights) {
        ensemble.members.emplace_back(jac, noise, priors, w);
    }
    return ensemble;
}

std::vector<PixelGrid> reconstruct_ensemble(const ReconstructionEnsemble& ensemble,
                                            const MeasurementVector& delta_u,
                                            const MeshToPixel& interpolator) {
    std::vector<PixelGrid> out;
    out.reserve(ensemble.members.size());
    for (const auto& member : ensemble.members) {
        out.push_back(interpolator.apply(member.reconstruct(delta_u)));
    }
    return out;
}

ClassMap segment(const PixelGrid& image, double t_low, double t_high) {
    if (!(t_low < 0.0) || !(t_high > 0.0)) {
        throw ConfigError("segment: thresholds must satisfy t_low < 0 < t_high");
    }
    ClassMap map(image.n);
    for (int r = 0; r < image.n; ++r) {
        for (int c = 0; c < image.n; ++c) {
            if (!pixel_in_disk(r, c, image.n)) continue;
            const double v = image.at(r, c);
            if (v < t_low) {
                map.at(r, c) = 1;
            } else if (v > t_high) {
                map.at(r, c) = 2;
            }
        }
    }
    return map;
}

namespace {

// Otsu's threshold over nonnegative magnitudes; returns the split value.
double otsu_split(const std::vector<double>& magnitudes, double max_value) {
    constexpr int kBins = 512;
    std::vector<double> hist(kBins, 0.0);
    for (double m : magnitudes) {
        int bin = static_cast<int>(m / max_value * (kBins - 1));
        bin = std::clamp(bin, 0, kBins - 1);
        hist[static_cast<std::size_t>(bin)] += 1.0;
    }
    const double total = static_cast<double>(magnitudes.size());
    double sum_all = 0.0;
    for (int i = 0; i < kBins; ++i) sum_all += i * hist[static_cast<std::size_t>(i)];

    double best_var = -1.0;
    int best_bin = kBins / 2;
    double w0 = 0.0, sum0 = 0.0;
    for (int i = 0; i < kBins - 1; ++i) {
        w0 += hist[static_cast<std::size_t>(i)];
        sum0 += i * hist[static_cast<std::size_t>(i)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_var) {
            best_var = between;
            best_bin = i;
        }
    }
    return (best_bin + 0.5) / (kBins - 1) * max_value;
}

}  // namespace

std::pair<double, double> otsu_thresholds(const PixelGrid& image) {
    std::vector<double> neg, pos;
    double peak = 0.0;
    for (int r = 0; r < image.n; ++r) {
        for (int c = 0; c < image.n; ++c) {
            if (!pixel_in_disk(r, c, image.n)) continue;
            const double v = image.at(r, c);
            peak = std::max(peak, std::abs(v));
            if (v < 0) {
                neg.push_back(-v);
            } else {
                pos.push_back(v);
            }
        }
    }

    const double inf = std::numeric_limits<double>::infinity();
    double t_low = -inf, t_high = inf;
    if (peak == 0.0) return {t_low, t_high};

    // a side only counts when its extreme is an appreciable fraction of the
    // dominant response; this keeps ringing of the opposite sign unclassified
    constexpr double kSideFloor = 0.3;
    const double neg_peak = neg.empty() ? 0.0 : *std::max_element(neg.begin(), neg.end());
    const double pos_peak = pos.empty() ? 0.0 : *std::max_element(pos.begin(), pos.end());
    if (neg_peak >= kSideFloor * peak) t_low = -otsu_split(neg, neg_peak);
    if (pos_peak >= kSideFloor * peak) t_high = otsu_split(pos, pos_peak);
    return {t_low, t_high};
}

WeightsConfig default_weights_config() {
    // Placeholder schedule calibrated against the default pipeline (1 A
    // injections, 0.745 background): one family per ensemble slot, strengths
    // growing with level as the problem loses data. Tunable configuration,
    // not a calibrated ground truth.
    WeightsConfig config;
    for (int level = 1; level <= kNumLevels; ++level) {
        const double g = 1.0 + 0.5 * (level - 1);
        std::vector<RegWeights> w;
        w.push_back({10.0 * g, 0.0, 0.0, "fsm"});
        w.push_back({0.0, 0.1 * g, 0.0, "sm"});
        w.push_back({0.0, 0.01 * g, 0.5 * g, "sm+lm"});
        w.push_back({10.0 * g, 0.001 * g, 0.1 * g, "fsm+sm+lm-weak"});
        w.push_back({100.0 * g, 0.01 * g, 1.0 * g, "fsm+sm+lm-strong"});
        config[level] = std::move(w);
    }
    return config;
}

WeightsConfig load_weights_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open weights config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("weights config " + path.string() + ": parse error: " + e.what());
    }
    WeightsConfig config;
    try {
        for (const auto& [key, arr] : j.items()) {
            const int level = std::stoi(key);
            std::vector<RegWeights> w;
            for (const auto& entry : arr) {
                RegWeights rw;
                rw.alpha_fsm = entry.at("alpha_fsm").get<double>();
                rw.alpha_sm = entry.at("alpha_sm").get<double>();
                rw.alpha_lm = entry.at("alpha_lm").get<double>();
                rw.label = entry.at("label").get<std::string>();
                rw.validate();
                w.push_back(std::move(rw));
            }
            config[level] = std::move(w);
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("weights config " + path.string() + ": missing or malformed field: " +
                      e.what());
    } catch (const std::invalid_argument&) {
        throw IoError("weights config " + path.string() + ": level keys must be integers");
    }
    return config;
}

void save_weights_config(const WeightsConfig& config, const std::filesystem::path& path) {
    nlohmann::json j;
    for (const auto& [level, weights] : config) {
        auto& arr = j[std::to_string(level)] = nlohmann::json::array();
        for (const auto& w : weights) {
            arr.push_back({{"label", w.label},
                           {"alpha_fsm", w.alpha_fsm},
                           {"alpha_sm", w.alpha_sm},
                           {"alpha_lm", w.alpha_lm}});
        }
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(1) << "\n";
}

}  // namespace eit
