#include "eitkit/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

namespace eit {

void PhantomSpec::validate() const {
    if (min_objects < 0 || max_objects < min_objects) {
        throw ConfigError("phantom spec: object count range [" + std::to_string(min_objects) +
                          "," + std::to_string(max_objects) + "] is empty");
    }
    const double wsum =
        shape_weights.polygon + shape_weights.circle + shape_weights.rectangle + shape_weights.blob;
    if (shape_weights.polygon < 0 || shape_weights.circle < 0 || shape_weights.rectangle < 0 ||
        shape_weights.blob < 0 || wsum <= 0) {
        throw ConfigError("phantom spec: shape weights must be nonnegative and not all zero");
    }
    if (!(min_size > 0) || !(max_size >= min_size) || !(max_size < 1.0)) {
        throw ConfigError("phantom spec: size range must satisfy 0 < min <= max < 1");
    }
    if (!(sigma_bg > 0)) throw ConfigError("phantom spec: sigma_bg must be > 0");
    if (!(radius > 0)) throw ConfigError("phantom spec: radius must be > 0");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Shape {
    std::string kind;
    Vec2 center;
    double bound = 0.0;           // radius of a disc containing the shape
    std::vector<double> params;   // kind-specific, see builders below
    std::vector<Vec2> poly;       // polygon vertices (CCW star-shaped)

    bool contains(Vec2 p) const {
        const Vec2 d = p - center;
        if (kind == "circle") {
            return dot(d, d) <= params[0] * params[0];
        }
        if (kind == "rectangle") {
            const double ca = std::cos(params[2]), sa = std::sin(params[2]);
            const double lx = ca * d.x + sa * d.y;
            const double ly = -sa * d.x + ca * d.y;
            return std::abs(lx) <= params[0] && std::abs(ly) <= params[1];
        }
        if (kind == "blob") {
            const double rr = norm(d);
            if (rr == 0.0) return true;
            const double theta = std::atan2(d.y, d.x);
            double radius = params[0];
            for (std::size_t m = 0; m + 1 < params.size() - 1; m += 2) {
                const double mode = 2.0 + static_cast<double>(m) / 2.0;
                radius += params[0] * params[1 + m] * std::cos(mode * theta + params[2 + m]);
            }
            return rr <= radius;
        }
        // polygon: ray-crossing test
        bool inside = false;
        const std::size_t nv = poly.size();
        for (std::size_t i = 0, j = nv - 1; i < nv; j = i++) {
            const Vec2 a = poly[i], b = poly[j];
            if ((a.y > p.y) != (b.y > p.y)) {
                const double x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if (p.x < x_cross) inside = !inside;
            }
        }
        return inside;
    }
};

std::string pick_kind(Rng& rng, const ShapeWeights& w) {
    const double total = w.polygon + w.circle + w.rectangle + w.blob;
    double u = rng.uniform() * total;
    if ((u -= w.polygon) < 0) return "polygon";
    if ((u -= w.circle) < 0) return "circle";
    if ((u -= w.rectangle) < 0) return "rectangle";
    return "blob";
}

Shape draw_shape(Rng& rng, const PhantomSpec& spec) {
    Shape s;
    s.kind = pick_kind(rng, spec.shape_weights);
    const double R = spec.radius;
    const double size = rng.uniform(spec.min_size, spec.max_size) * R;

    // center inside a shrunken disk so most attempts are feasible
    const double max_center = std::max(0.0, R - 1.15 * size);
    const double cr = max_center * std::sqrt(rng.uniform());
    const double ca = rng.uniform(0.0, kTwoPi);
    s.center = {cr * std::cos(ca), cr * std::sin(ca)};

    if (s.kind == "circle") {
        s.params = {size};
        s.bound = size;
    } else if (s.kind == "rectangle") {
        const double hw = size;
        const double hh = size * rng.uniform(0.4, 1.0);
        const double angle = rng.uniform(0.0, kTwoPi);
        s.params = {hw, hh, angle};
        s.bound = std::sqrt(hw * hw + hh * hh);
    } else if (s.kind == "blob") {
        // low-order radial Fourier perturbation of a circle
        s.params = {size};
        double wiggle = 0.0;
        for (int m = 2; m <= 4; ++m) {
            const double amp = rng.uniform(-0.4, 0.4) / m;
            const double phase = rng.uniform(0.0, kTwoPi);
            s.params.push_back(amp);
            s.params.push_back(phase);
            wiggle += std::abs(amp);
        }
        s.bound = size * (1.0 + wiggle);
    } else {
        const int nv = static_cast<int>(rng.uniform_int(3, 7));
        std::vector<double> angles(static_cast<std::size_t>(nv));
        for (auto& a : angles) a = rng.uniform(0.0, kTwoPi);
        std::sort(angles.begin(), angles.end());
        s.bound = 0.0;
        for (double a : angles) {
            const double r = size * rng.uniform(0.55, 1.0);
            s.poly.push_back(s.center + Vec2{r * std::cos(a), r * std::sin(a)});
            s.bound = std::max(s.bound, r);
        }
    }
    return s;
}

// pixels covered by the shape, restricted to the bounding box
std::vector<std::pair<int, int>> rasterize(const Shape& s, int n, double R) {
    const double step = 2.0 * R / n;
    const int c_min = std::max(0, static_cast<int>((s.center.x - s.bound + R) / step) - 1);
    const int c_max = std::min(n - 1, static_cast<int>((s.center.x + s.bound + R) / step) + 1);
    const int r_min = std::max(0, static_cast<int>((R - s.center.y - s.bound) / step) - 1);
    const int r_max = std::min(n - 1, static_cast<int>((R - s.center.y + s.bound) / step) + 1);

    std::vector<std::pair<int, int>> pixels;
    for (int r = r_min; r <= r_max; ++r) {
        for (int c = c_min; c <= c_max; ++c) {
            if (s.contains(pixel_center(r, c, n, R))) pixels.emplace_back(r, c);
        }
    }
    return pixels;
}

// a shape whose thin parts drop below pixel resolution rasterizes into
// disconnected islands; such draws are rejected
bool pixels_connected(const std::vector<std::pair<int, int>>& pixels) {
    if (pixels.empty()) return false;
    std::map<std::pair<int, int>, int> index;
    for (std::size_t i = 0; i < pixels.size(); ++i) index[pixels[i]] = static_cast<int>(i);
    std::vector<std::uint8_t> seen(pixels.size(), 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
        const auto [r, c] = pixels[static_cast<std::size_t>(stack.back())];
        stack.pop_back();
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                const auto it = index.find({r + dr, c + dc});
                if (it == index.end() || seen[static_cast<std::size_t>(it->second)]) continue;
                seen[static_cast<std::size_t>(it->second)] = 1;
                ++reached;
                stack.push_back(it->second);
            }
        }
    }
    return reached == pixels.size();
}

}  // namespace

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);

    Phantom phantom;
    phantom.sigma_bg = spec.sigma_bg;
    phantom.radius = spec.radius;
    phantom.class_map = ClassMap(kGridSize);
    phantom.conductivity_img = PixelGrid(kGridSize, spec.sigma_bg);

    const int n = kGridSize;
    const int n_objects = static_cast<int>(rng.uniform_int(spec.min_objects, spec.max_objects));

    std::vector<std::uint8_t> occupied(static_cast<std::size_t>(n) * n, 0);

    for (int obj = 0; obj < n_objects; ++obj) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            Shape shape = draw_shape(rng, spec);
            const int cls = static_cast<int>(rng.uniform_int(1, 2));
            const double conductivity = cls == 1 ? rng.uniform(kResistiveMin, kResistiveMax)
                                                 : rng.uniform(kConductiveMin, kConductiveMax);

            const auto pixels = rasterize(shape, n, spec.radius);
            if (pixels.empty() || !pixels_connected(pixels)) continue;

            bool ok = true;
            for (const auto& [r, c] : pixels) {
                if (!pixel_in_disk(r, c, n)) {
                    ok = false;
                    break;
                }
                // >= 1 pixel separation from existing objects
                for (int dr = -1; dr <= 1 && ok; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr >= 0 && rr < n && cc >= 0 && cc < n &&
                            occupied[static_cast<std::size_t>(rr) * n + cc]) {
                            ok = false;
                            break;
                        }
                    }
                }
                if (!ok) break;
            }
            if (!ok) continue;

            for (const auto& [r, c] : pixels) {
                occupied[static_cast<std::size_t>(r) * n + c] = 1;
                phantom.class_map.at(r, c) = static_cast<std::uint8_t>(cls);
                phantom.conductivity_img.at(r, c) = conductivity;
            }
            PhantomObject record;
            record.kind = shape.kind;
            record.cls = cls;
            record.conductivity = conductivity;
            record.params = {shape.center.x, shape.center.y};
            record.params.insert(record.params.end(), shape.params.begin(), shape.params.end());
            for (const auto& v : shape.poly) {
                record.params.push_back(v.x);
                record.params.push_back(v.y);
            }
            phantom.objects.push_back(std::move(record));
            placed = true;
        }
        if (!placed) {
            throw ValidationError("phantom generation: could not place object " +
                                  std::to_string(obj + 1) + " after 1000 attempts; use fewer or "
                                  "smaller objects");
        }
    }

    phantom.class_map.validate();
    return phantom;
}

Eigen::VectorXd pixel_to_mesh(const PixelGrid& img, const TriMesh& mesh) {
    const int n = img.n;
    const double R = mesh.radius;
    if (!(R > 0)) throw ValidationError("pixel_to_mesh: mesh has no tank radius");
    const double step = 2.0 * R / n;

    Eigen::VectorXd values(mesh.n_elements());
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const Vec2 c = mesh.element_centroid(e);
        const int col = static_cast<int>(std::floor((c.x + R) / step));
        const int row = static_cast<int>(std::floor((R - c.y) / step));
        if (col < 0 || col >= n || row < 0 || row >= n) {
            throw ValidationError("pixel_to_mesh: element " + std::to_string(e) +
                                  " centroid falls outside the image; mesh and grid disagree");
        }
        values[e] = img.at(row, col);
    }
    return values;
}

namespace {

// uniform spatial bins over the bounding square for point location
class ElementLocator {
public:
    explicit ElementLocator(const TriMesh& mesh) : mesh_(mesh) {
        const double R = mesh.radius;
        cell_ = std::max(mesh.max_element_diameter(), 1e-12);
        nx_ = std::max(1, static_cast<int>(std::ceil(2.0 * R / cell_)));
        bins_.resize(static_cast<std::size_t>(nx_) * nx_);
        for (int e = 0; e < mesh.n_elements(); ++e) {
            const auto& t = mesh.elements[static_cast<std::size_t>(e)];
            double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
            for (int v : t) {
                xmin = std::min(xmin, mesh.vertices[v].x);
                xmax = std::max(xmax, mesh.vertices[v].x);
                ymin = std::min(ymin, mesh.vertices[v].y);
                ymax = std::max(ymax, mesh.vertices[v].y);
            }
            for (int bx = bin_index(xmin); bx <= bin_index(xmax); ++bx) {
                for (int by = bin_index(ymin); by <= bin_index(ymax); ++by) {
                    bins_[static_cast<std::size_t>(by) * nx_ + bx].push_back(e);
                }
            }
        }
    }

    // containing element and barycentric coords; negative coords up to the
    // tolerance mean the point sits in the sliver between the polygonal
    // boundary and the true circle
    int locate(Vec2 p, std::array<double, 3>& bary) const {
        int best = -1;
        double best_min = -1e300;
        const int bx = bin_index(p.x), by = bin_index(p.y);
        for (int e : bins_[static_cast<std::size_t>(by) * nx_ + bx]) {
            std::array<double, 3> w;
            if (!barycentric(e, p, w)) continue;
            const double wmin = std::min({w[0], w[1], w[2]});
            if (wmin > best_min) {
                best_min = wmin;
                best = e;
                bary = w;
            }
            if (wmin >= 0.0) break;  // strictly inside, done
        }
        if (best >= 0 && best_min >= -0.25) return best;
        return -1;
    }

private:
    int bin_index(double x) const {
        const double R = mesh_.radius;
        int i = static_cast<int>((x + R) / cell_);
        return std::clamp(i, 0, nx_ - 1);
    }

    bool barycentric(int e, Vec2 p, std::array<double, 3>& w) const {
        const auto& t = mesh_.elements[static_cast<std::size_t>(e)];
        const Vec2 a = mesh_.vertices[t[0]], b = mesh_.vertices[t[1]], c = mesh_.vertices[t[2]];
        const double det = cross(b - a, c - a);
        if (det <= 0) return false;
        w[1] = cross(p - a, c - a) / det;
        w[2] = cross(b - a, p - a) / det;
        w[0] = 1.0 - w[1] - w[2];
        return true;
    }

    const TriMesh& mesh_;
    double cell_;
    int nx_;
    std::vector<std::vector<int>> bins_;
};

}  // namespace

MeshToPixel::MeshToPixel(const TriMesh& mesh, int grid_size, MeshToPixelMode mode) : n_(grid_size) {
    const double R = mesh.radius;
    if (!(R > 0)) throw ValidationError("mesh_to_pixel: mesh has no tank radius");

    // element-to-vertex averaging weights
    std::vector<std::vector<std::pair<int, double>>> vertex_weights(
        static_cast<std::size_t>(mesh.n_vertices()));
    if (mode == MeshToPixelMode::kSmooth) {
        std::vector<int> degree(static_cast<std::size_t>(mesh.n_vertices()), 0);
        for (const auto& t : mesh.elements) {
            for (int v : t) degree[static_cast<std::size_t>(v)]++;
        }
        for (int e = 0; e < mesh.n_elements(); ++e) {
            for (int v : mesh.elements[static_cast<std::size_t>(e)]) {
                vertex_weights[static_cast<std::size_t>(v)].emplace_back(
                    e, 1.0 / degree[static_cast<std::size_t>(v)]);
            }
        }
    }

    const ElementLocator locator(mesh);
    std::vector<Eigen::Triplet<double>> trips;

    for (int r = 0; r < n_; ++r) {
        for (int c = 0; c < n_; ++c) {
            if (!pixel_in_disk(r, c, n_)) continue;
            const Vec2 p = pixel_center(r, c, n_, R);
            std::array<double, 3> bary{};
            const int e = locator.locate(p, bary);
            if (e < 0) continue;  // outside the meshed polygon beyond tolerance
            const int row = r * n_ + c;

            if (mode == MeshToPixelMode::kNearest) {
                trips.emplace_back(row, e, 1.0);
                continue;
            }
            // clamp sliver-pixel weights and renormalize; weights stay a pure
            // function of geometry, so the operator remains linear
            double wsum = 0.0;
            for (double& w : bary) {
                w = std::max(w, 0.0);
                wsum += w;
            }
            const auto& t = mesh.elements[static_cast<std::size_t>(e)];
            for (int v = 0; v < 3; ++v) {
                const double wv = bary[static_cast<std::size_t>(v)] / wsum;
                if (wv == 0.0) continue;
                for (const auto& [elem, weight] : vertex_weights[static_cast<std::size_t>(t[v])]) {
                    trips.emplace_back(row, elem, wv * weight);
                }
            }
        }
    }

    weights_.resize(static_cast<Eigen::Index>(n_) * n_, mesh.n_elements());
    weights_.setFromTriplets(trips.begin(), trips.end());
    weights_.makeCompressed();
}

PixelGrid MeshToPixel::apply(const Eigen::VectorXd& element_values) const {
    if (element_values.size() != weights_.cols()) {
        throw ValidationError("mesh_to_pixel: vector has " + std::to_string(element_values.size()) +
                              " entries, operator expects " + std::to_string(weights_.cols()));
    }
    const Eigen::VectorXd img = weights_ * element_values;
    PixelGrid grid(n_);
    for (std::size_t i = 0; i < grid.v.size(); ++i) grid.v[i] = img[static_cast<Eigen::Index>(i)];
    return grid;
}

PixelGrid mesh_to_pixel(const Eigen::VectorXd& element_values, const TriMesh& mesh, int grid_size,
                        MeshToPixelMode mode) {
    return MeshToPixel(mesh, grid_size, mode).apply(element_values);
}

MeasurementVector add_noise(const MeasurementVector& u, const NoiseModel& noise,
                            std::uint64_t seed) {
    noise.validate();
    if (noise.diag.size() != u.values.size()) {
        throw ValidationError("add_noise: noise model has " + std::to_string(noise.diag.size()) +
                              " entries, measurement has " + std::to_string(u.values.size()));
    }
    Rng rng(seed);
    MeasurementVector out = u;
    for (Eigen::Index i = 0; i < out.values.size(); ++i) {
        out.values[i] += std::sqrt(noise.diag[i]) * rng.normal();
    }
    return out;
}

namespace {

std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
        if (!in) break;
    }
    return h;
}

std::string sample_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%04d", index);
    return buf;
}

struct SampleResult {
    int level = 0;
    int index = 0;
    std::string status;  // complete | failed | reused
    std::uint64_t phantom_seed = 0;
    std::uint64_t noise_seed = 0;
    nlohmann::json hashes;
    std::string error;
};

}  // namespace

nlohmann::json generate_dataset(const DatasetConfig& config, const TriMesh& mesh,
                                const std::filesystem::path& out_dir) {
    PhantomSpec spec = config.phantom;
    spec.radius = mesh.radius;  // phantom geometry is tied to the tank
    spec.validate();
    if (config.noise_scale < 0) throw ConfigError("dataset: noise_scale must be >= 0");

    std::filesystem::create_directories(out_dir);

    const int L = mesh.n_electrodes();
    const auto z = ContactImpedances::uniform(L, config.contact_impedance);
    const auto full_patterns = make_challenge_patterns(L, config.injection_current, 1);
    const CEMSystem ref_system(mesh, Conductivity::homogeneous(mesh.n_elements(), spec.sigma_bg), z);
    const ElectrodeFrame ref_frame = solve_forward(ref_system, full_patterns);

    std::vector<LevelConfig> cfgs;
    std::vector<MeasurementVector> u_ref;
    std::vector<NoiseModel> noise_models;
    std::vector<CurrentPatternSet> level_patterns;
    for (int level = 1; level <= kNumLevels; ++level) {
        cfgs.push_back(level_config(level, L));
        u_ref.push_back(apply_measurement_operator(ref_frame, cfgs.back()));
        noise_models.push_back(build_noise_model(u_ref.back()));
        level_patterns.push_back(make_challenge_patterns(L, config.injection_current, level));
        const auto level_dir = out_dir / ("level_" + std::to_string(level));
        std::filesystem::create_directories(level_dir);
        save_measurement(u_ref.back(), level_patterns.back(), level_dir / "u_ref.json");
    }

    struct Job {
        int level;
        int index;
    };
    std::vector<Job> jobs;
    for (int level = 1; level <= kNumLevels; ++level) {
        for (int i = 0; i < config.n_per_level[static_cast<std::size_t>(level - 1)]; ++i) {
            jobs.push_back({level, i});
        }
    }

    std::vector<SampleResult> results(jobs.size());
    std::atomic<std::size_t> next_job{0};

    auto run_job = [&](std::size_t job_index) {
        const Job job = jobs[job_index];
        const int level = job.level;
        SampleResult res;
        res.level = level;
        res.index = job.index;
        const std::uint64_t stream =
            (static_cast<std::uint64_t>(level) << 32) | static_cast<std::uint64_t>(job.index);
        res.phantom_seed = derive_seed(config.master_seed, stream, 0);
        res.noise_seed = derive_seed(config.master_seed, stream, 1);

        const auto dir = out_dir / ("level_" + std::to_string(level)) / sample_dir_name(job.index);
        const auto meta_path = dir / "meta.json";
        if (std::filesystem::exists(meta_path)) {
            try {
                nlohmann::json meta;
                std::ifstream in(meta_path);
                in >> meta;
                if (meta.at("status") == "complete") {
                    res.status = "reused";
                    res.hashes = meta.at("hashes");
                    results[job_index] = std::move(res);
                    return;
                }
            } catch (...) {
                // unreadable meta: regenerate below
            }
        }

        try {
            std::filesystem::create_directories(dir);
            const Phantom phantom = generate_phantom(spec, res.phantom_seed);
            Conductivity sigma;
            sigma.values = pixel_to_mesh(phantom.conductivity_img, mesh);
            const CEMSystem system(mesh, sigma, z);
            const auto& cfg = cfgs[static_cast<std::size_t>(level - 1)];
            const auto& patterns = level_patterns[static_cast<std::size_t>(level - 1)];
            const ElectrodeFrame frame = solve_forward(system, patterns);
            MeasurementVector u = apply_measurement_operator(frame, cfg);

            MeasurementVector delta = u;
            delta.values -= u_ref[static_cast<std::size_t>(level - 1)].values;
            if (config.noise_scale > 0) {
                NoiseModel scaled = noise_models[static_cast<std::size_t>(level - 1)];
                scaled.diag *= config.noise_scale * config.noise_scale;
                delta = add_noise(delta, scaled, res.noise_seed);
            }

            save_class_map(phantom.class_map, dir / "class_map", mesh.radius);
            save_grid(phantom.conductivity_img, dir / "conductivity_img", mesh.radius);

            nlohmann::json dj;
            dj["level"] = level;
            dj["pattern_ids"] = delta.pattern_ids;
            dj["values"] = std::vector<double>(delta.values.data(),
                                               delta.values.data() + delta.values.size());
            dj["noise_seed"] = res.noise_seed;
            dj["noise_scale"] = config.noise_scale;
            {
                std::ofstream out(dir / "delta_u.json");
                if (!out) throw IoError("cannot write " + (dir / "delta_u.json").string());
                out << dj.dump(1) << "\n";
            }

            res.hashes["class_map"] = hash_file(dir / "class_map.bin");
            res.hashes["conductivity_img"] = hash_file(dir / "conductivity_img.bin");
            res.hashes["delta_u"] = hash_file(dir / "delta_u.json");
            res.status = "complete";

            nlohmann::json meta;
            meta["level"] = level;
            meta["index"] = job.index;
            meta["status"] = res.status;
            meta["phantom_seed"] = res.phantom_seed;
            meta["noise_seed"] = res.noise_seed;
            meta["hashes"] = res.hashes;
            meta["objects"] = nlohmann::json::array();
            for (const auto& obj : phantom.objects) {
                meta["objects"].push_back({{"kind", obj.kind},
                                           {"class", obj.cls},
                                           {"conductivity", obj.conductivity}});
            }
            meta["provenance"] = {{"mesh_hash", mesh_hash(mesh)},
                                  {"contact_impedance", config.contact_impedance},
                                  {"injection_current", config.injection_current},
                                  {"sigma_bg", spec.sigma_bg},
                                  {"level", level},
                                  {"n_patterns", patterns.n_patterns()}};
            std::ofstream out(meta_path);
            if (!out) throw IoError("cannot write " + meta_path.string());
            out << meta.dump(1) << "\n";
        } catch (const std::exception& e) {
            res.status = "failed";
            res.error = e.what();
            nlohmann::json meta;
            meta["level"] = level;
            meta["index"] = job.index;
            meta["status"] = res.status;
            meta["error"] = res.error;
            std::ofstream out(meta_path);
            out << meta.dump(1) << "\n";
        }
        results[job_index] = std::move(res);
    };

    const int n_threads = std::max(1, config.threads);
    if (n_threads == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next_job.fetch_add(1);
                    if (i >= jobs.size()) return;
                    run_job(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }

    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["master_seed"] = config.master_seed;
    manifest["n_per_level"] = config.n_per_level;
    manifest["mesh_hash"] = mesh_hash(mesh);
    manifest["sigma_bg"] = spec.sigma_bg;
    manifest["contact_impedance"] = config.contact_impedance;
    manifest["injection_current"] = config.injection_current;
    manifest["noise_scale"] = config.noise_scale;
    auto& samples = manifest["samples"] = nlohmann::json::array();
    std::array<int, kNumLevels> complete{}, failed{};
    for (const auto& res : results) {
        nlohmann::json s;
        s["level"] = res.level;
        s["id"] = sample_dir_name(res.index);
        s["status"] = res.status == "reused" ? "complete" : res.status;
        s["phantom_seed"] = res.phantom_seed;
        s["noise_seed"] = res.noise_seed;
        if (!res.hashes.is_null()) s["hashes"] = res.hashes;
        if (!res.error.empty()) s["error"] = res.error;
        samples.push_back(std::move(s));
        if (res.status == "failed") {
            failed[static_cast<std::size_t>(res.level - 1)]++;
        } else {
            complete[static_cast<std::size_t>(res.level - 1)]++;
        }
    }
    manifest["counts"] = {{"complete", complete}, {"failed", failed}};

    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw IoError("cannot write " + (out_dir / "manifest.json").string());
    out << manifest.dump(1) << "\n";
    return manifest;
}

}  // namespace eit
