#include "eitkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace eit {

namespace {

std::vector<double> window_kernel(const SsimParams& params) {
    const int w = params.window;
    std::vector<double> k(static_cast<std::size_t>(w));
    if (params.gaussian) {
        const double center = (w - 1) / 2.0;
        double sum = 0.0;
        for (int i = 0; i < w; ++i) {
            const double d = i - center;
            k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * params.sigma * params.sigma));
            sum += k[static_cast<std::size_t>(i)];
        }
        for (auto& v : k) v /= sum;
    } else {
        std::fill(k.begin(), k.end(), 1.0 / w);
    }
    return k;
}

// separable 'valid' convolution: output is (n-w+1) x (n-w+1)
std::vector<double> filter_valid(const std::vector<double>& img, int n,
                                 const std::vector<double>& kernel) {
    const int w = static_cast<int>(kernel.size());
    const int m = n - w + 1;
    std::vector<double> rows(static_cast<std::size_t>(n) * m);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < m; ++c) {
            double acc = 0.0;
            for (int k = 0; k < w; ++k) {
                acc += kernel[static_cast<std::size_t>(k)] *
                       img[static_cast<std::size_t>(r) * n + c + k];
            }
            rows[static_cast<std::size_t>(r) * m + c] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(m) * m);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < m; ++c) {
            double acc = 0.0;
            for (int k = 0; k < w; ++k) {
                acc += kernel[static_cast<std::size_t>(k)] *
                       rows[static_cast<std::size_t>(r + k) * m + c];
            }
            out[static_cast<std::size_t>(r) * m + c] = acc;
        }
    }
    return out;
}

}  // namespace

double ssim(const PixelGrid& a, const PixelGrid& b, const SsimParams& params) {
    if (a.n != b.n) {
        throw ValidationError("ssim: shape mismatch, " + std::to_string(a.n) + " vs " +
                              std::to_string(b.n));
    }
    if (params.window < 1 || params.window > a.n) {
        throw ConfigError("ssim: window must be in [1, image size]");
    }

    const double c1 = params.k1 * params.data_range * params.k1 * params.data_range;
    const double c2 = params.k2 * params.data_range * params.k2 * params.data_range;
    const auto kernel = window_kernel(params);

    const int n = a.n;
    std::vector<double> aa(a.v.size()), bb(b.v.size()), ab(a.v.size());
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        aa[i] = a.v[i] * a.v[i];
        bb[i] = b.v[i] * b.v[i];
        ab[i] = a.v[i] * b.v[i];
    }

    const auto mu_a = filter_valid(a.v, n, kernel);
    const auto mu_b = filter_valid(b.v, n, kernel);
    const auto m_aa = filter_valid(aa, n, kernel);
    const auto m_bb = filter_valid(bb, n, kernel);
    const auto m_ab = filter_valid(ab, n, kernel);

    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double var_a = m_aa[i] - mu_a[i] * mu_a[i];
        const double var_b = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
        sum += num / den;
    }
    return sum / static_cast<double>(mu_a.size());
}

double score_segmentation(const ClassMap& pred, const ClassMap& truth, const SsimParams& params) {
    if (pred.n != truth.n) {
        throw ValidationError("score: prediction is " + std::to_string(pred.n) + "x" +
                              std::to_string(pred.n) + ", truth is " + std::to_string(truth.n) +
                              "x" + std::to_string(truth.n));
    }
    const double conductive = ssim(binary_class_map(pred, 2), binary_class_map(truth, 2), params);
    const double resistive = ssim(binary_class_map(pred, 1), binary_class_map(truth, 1), params);
    return 0.5 * (conductive + resistive);
}

namespace {

// class maps below truth_dir, as relative ids like "level_3/sample_0007"
std::vector<std::pair<std::string, std::filesystem::path>> find_class_maps(
    const std::filesystem::path& dir) {
    std::vector<std::pair<std::string, std::filesystem::path>> found;
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("not a directory: " + dir.string());
    }
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto& p = entry.path();
        const bool binary = p.filename() == "class_map.bin";
        const bool json = p.filename() == "class_map.json";
        if (!binary && !json) continue;
        auto rel = std::filesystem::relative(p.parent_path(), dir).generic_string();
        if (rel == ".") rel = "";
        found.emplace_back(rel, p);
    }
    // prefer binary over json when both exist for the same sample
    std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first < y.first;
        return x.second.extension() == ".bin" && y.second.extension() != ".bin";
    });
    found.erase(std::unique(found.begin(), found.end(),
                            [](const auto& x, const auto& y) { return x.first == y.first; }),
                found.end());
    return found;
}

int parse_level(const std::string& id) {
    const auto pos = id.find("level_");
    if (pos == std::string::npos) return -1;
    try {
        return std::stoi(id.substr(pos + 6));
    } catch (...) {
        return -1;
    }
}

}  // namespace

ScoreReport score_run(const std::filesystem::path& pred_dir,
                      const std::filesystem::path& truth_dir, const SsimParams& params) {
    const auto truth_maps = find_class_maps(truth_dir);
    if (truth_maps.empty()) {
        throw IoError("no class maps found under " + truth_dir.string());
    }
    const auto pred_maps = find_class_maps(pred_dir);

    std::string missing;
    for (const auto& [id, path] : truth_maps) {
        const bool found = std::any_of(pred_maps.begin(), pred_maps.end(),
                                       [&](const auto& p) { return p.first == id; });
        if (!found) missing += (missing.empty() ? "" : ", ") + id;
    }
    if (!missing.empty()) {
        throw IoError("predictions missing for: " + missing);
    }

    ScoreReport report;
    for (const auto& [id, truth_path] : truth_maps) {
        const auto pred_it = std::find_if(pred_maps.begin(), pred_maps.end(),
                                          [&](const auto& p) { return p.first == id; });
        const ClassMap truth = load_class_map(truth_path);
        const ClassMap pred = load_class_map(pred_it->second);
        const int level = parse_level(id);
        if (level < 1 || level > kNumLevels) {
            throw IoError("cannot infer level from sample id '" + id +
                          "' (expected a level_<k> path component)");
        }
        SampleScore s;
        s.id = id;
        s.level = level;
        s.score = score_segmentation(pred, truth, params);
        report.level_sums[static_cast<std::size_t>(level - 1)] += s.score;
        report.samples.push_back(std::move(s));
    }
    for (double v : report.level_sums) report.overall += v;
    return report;
}

void write_report_json(const ScoreReport& report, const std::filesystem::path& path) {
    nlohmann::json j;
    auto& samples = j["samples"] = nlohmann::json::array();
    for (const auto& s : report.samples) {
        samples.push_back({{"id", s.id}, {"level", s.level}, {"score", s.score}});
    }
    j["level_sums"] = report.level_sums;
    j["overall"] = report.overall;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(1) << "\n";
}

std::string format_report_table(const ScoreReport& report) {
    std::ostringstream os;
    os << "Level ";
    for (int level = 1; level <= kNumLevels; ++level) {
        os << "      " << level;
    }
    os << "      Sum\n" << "Score ";
    char buf[32];
    for (double v : report.level_sums) {
        std::snprintf(buf, sizeof(buf), " %6.2f", v);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "   %6.2f", report.overall);
    os << buf << "\n";
    return os.str();
}

}  // namespace eit
