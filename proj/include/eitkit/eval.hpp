#ifndef EITKIT_EVAL_HPP
#define EITKIT_EVAL_HPP

#include <array>
#include <string>

#include "eitkit/grid.hpp"
#include "eitkit/levels.hpp"

namespace eit {

// Standard SSIM parameterization: 11x11 Gaussian window (stddev 1.5),
// C1=(k1*D)^2, C2=(k2*D)^2 with data range D=1 for binary maps. The map is
// averaged over all fully-contained window positions.
struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
    bool gaussian = true;  // false: uniform window
};

double ssim(const PixelGrid& a, const PixelGrid& b, const SsimParams& params = {});

// Mean of the conductive-map SSIM and the resistive-map SSIM.
double score_segmentation(const ClassMap& pred, const ClassMap& truth,
                          const SsimParams& params = {});

struct SampleScore {
    std::string id;  // e.g. level_3/sample_0007
    int level = 0;
    double score = 0.0;
};

struct ScoreReport {
    std::vector<SampleScore> samples;
    std::array<double, kNumLevels> level_sums{};
    double overall = 0.0;
};

// Scores every class map found under truth_dir against the prediction with
// the same relative path; per-sample scores are summed per level and across
// levels. Missing predictions are an error, not a zero.
ScoreReport score_run(const std::filesystem::path& pred_dir,
                      const std::filesystem::path& truth_dir, const SsimParams& params = {});

void write_report_json(const ScoreReport& report, const std::filesystem::path& path);
// Aligned plain-text table: levels 1..7 columns plus the overall sum.
std::string format_report_table(const ScoreReport& report);

}  // namespace eit

#endif
