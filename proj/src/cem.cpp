#include "eitkit/cem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace eit {

std::atomic<long> SolveStats::factorizations{0};
std::atomic<long> SolveStats::solves{0};

void SolveStats::reset() {
    factorizations = 0;
    solves = 0;
}

Conductivity Conductivity::homogeneous(int n_elements, double value) {
    Conductivity sigma;
    sigma.values = Eigen::VectorXd::Constant(n_elements, value);
    sigma.validate();
    return sigma;
}

void Conductivity::validate() const {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]) || values[i] <= 0.0) {
            throw ValidationError("conductivity: entry " + std::to_string(i) +
                                  " must be finite and > 0, got " + std::to_string(values[i]));
        }
    }
    if (values.size() == 0) throw ValidationError("conductivity: empty vector");
}

ContactImpedances ContactImpedances::uniform(int n_electrodes, double value) {
    ContactImpedances z;
    z.z = Eigen::VectorXd::Constant(n_electrodes, value);
    z.validate();
    return z;
}

void ContactImpedances::validate() const {
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (!std::isfinite(z[i]) || z[i] <= 0.0) {
            throw ValidationError("contact impedance: entry " + std::to_string(i) +
                                  " must be finite and > 0, got " + std::to_string(z[i]));
        }
    }
    if (z.size() == 0) throw ValidationError("contact impedance: empty vector");
}

void CurrentPatternSet::validate() const {
    if (patterns.rows() == 0 || patterns.cols() == 0) {
        throw ValidationError("pattern set: empty");
    }
    if (static_cast<int>(active_electrodes.size()) != n_electrodes()) {
        throw ValidationError("pattern set: active-electrode mask size mismatch");
    }
    for (int k = 0; k < n_patterns(); ++k) {
        const double rowsum = patterns.row(k).sum();
        if (std::abs(rowsum) >= 1e-12) {
            throw ValidationError("pattern " + std::to_string(k) + ": currents sum to " +
                                  std::to_string(rowsum) + ", must be 0");
        }
        if (patterns.row(k).cwiseAbs().maxCoeff() == 0.0) {
            throw ValidationError("pattern " + std::to_string(k) + ": all currents zero");
        }
        for (int l = 0; l < n_electrodes(); ++l) {
            if (!active_electrodes[static_cast<std::size_t>(l)] && patterns(k, l) != 0.0) {
                throw ValidationError("pattern " + std::to_string(k) +
                                      ": current on removed electrode " + std::to_string(l + 1));
            }
        }
    }
}

CurrentPatternSet make_challenge_patterns(int n_electrodes, double amplitude, int level) {
    const auto all_pairs = challenge_injection_pairs(n_electrodes);
    const LevelConfig cfg = level_config(level, n_electrodes);

    CurrentPatternSet set;
    set.level = level;
    set.active_electrodes = cfg.electrode_active;
    set.patterns = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.active_patterns.size()),
                                         n_electrodes);
    for (std::size_t row = 0; row < cfg.active_patterns.size(); ++row) {
        const auto& pair = all_pairs[static_cast<std::size_t>(cfg.active_patterns[row])];
        set.patterns(static_cast<Eigen::Index>(row), pair.src - 1) = amplitude;
        set.patterns(static_cast<Eigen::Index>(row), pair.dst - 1) = -amplitude;
        set.pattern_ids.push_back(cfg.active_patterns[row]);
    }
    set.validate();
    return set;
}

void NoiseModel::validate() const {
    if (diag.size() == 0) throw ValidationError("noise model: empty");
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
        if (!std::isfinite(diag[i]) || diag[i] <= 0.0) {
            throw ValidationError("noise model: variance " + std::to_string(i) +
                                  " must be finite and > 0");
        }
    }
}

NoiseModel build_noise_model(const MeasurementVector& u_ref) {
    if (u_ref.values.size() == 0) {
        throw ValidationError("noise model: reference measurement is empty");
    }
    const double peak = u_ref.values.cwiseAbs().maxCoeff();
    if (peak == 0.0) {
        throw ValidationError("noise model: all-zero reference measurement is degenerate");
    }
    NoiseModel model;
    model.diag = 0.05 * u_ref.values.cwiseAbs().array() + 0.01 * peak;
    model.validate();
    return model;
}

namespace {

// Local P1 stiffness: K_ab = sigma * (g_a . g_b) * area, with constant
// per-element gradients g_a.
struct ElementGeometry {
    double area;
    Vec2 grad[3];
};

ElementGeometry element_geometry(const TriMesh& mesh, int e) {
    const auto& t = mesh.elements[static_cast<std::size_t>(e)];
    const Vec2 p0 = mesh.vertices[t[0]], p1 = mesh.vertices[t[1]], p2 = mesh.vertices[t[2]];
    const double twice_area = cross(p1 - p0, p2 - p0);
    if (twice_area <= 2e-14) {
        throw ValidationError("mesh: element " + std::to_string(e) + " degenerate during assembly");
    }
    ElementGeometry g;
    g.area = 0.5 * twice_area;
    g.grad[0] = {(p1.y - p2.y) / twice_area, (p2.x - p1.x) / twice_area};
    g.grad[1] = {(p2.y - p0.y) / twice_area, (p0.x - p2.x) / twice_area};
    g.grad[2] = {(p0.y - p1.y) / twice_area, (p1.x - p0.x) / twice_area};
    return g;
}

}  // namespace

CEMSystem::CEMSystem(const TriMesh& mesh, const Conductivity& sigma, const ContactImpedances& z) {
    sigma.validate();
    z.validate();
    if (sigma.values.size() != mesh.n_elements()) {
        throw ValidationError("conductivity has " + std::to_string(sigma.values.size()) +
                              " entries for a mesh with " + std::to_string(mesh.n_elements()) +
                              " elements");
    }
    if (z.z.size() != mesh.n_electrodes()) {
        throw ValidationError("contact impedance has " + std::to_string(z.z.size()) +
                              " entries for " + std::to_string(mesh.n_electrodes()) +
                              " electrodes");
    }

    const int N = mesh.n_vertices();
    const int L = mesh.n_electrodes();
    n_vertices_ = N;
    n_electrodes_ = L;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(9 * mesh.n_elements() + 8 * N + 4 * L));

    // A(sigma): exact P1 stiffness
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto geom = element_geometry(mesh, e);
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        const double s = sigma.values[e];
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                trips.emplace_back(t[a], t[b], s * geom.area * dot(geom.grad[a], geom.grad[b]));
            }
        }
    }

    // B, C, D: exact edge integrals (edge mass s/6*[[2,1],[1,2]], loads s/2)
    for (int l = 0; l < L; ++l) {
        const double zl = z.z[l];
        for (const auto& edge : mesh.electrode_edges[static_cast<std::size_t>(l)]) {
            const double s = mesh.edge_length(edge);
            const int a = edge[0], b = edge[1];
            trips.emplace_back(a, a, s / (3.0 * zl));
            trips.emplace_back(b, b, s / (3.0 * zl));
            trips.emplace_back(a, b, s / (6.0 * zl));
            trips.emplace_back(b, a, s / (6.0 * zl));
            trips.emplace_back(a, N + l, -s / (2.0 * zl));
            trips.emplace_back(N + l, a, -s / (2.0 * zl));
            trips.emplace_back(b, N + l, -s / (2.0 * zl));
            trips.emplace_back(N + l, b, -s / (2.0 * zl));
            trips.emplace_back(N + l, N + l, s / zl);
        }
    }

    // mean-free voltage constraint
    for (int l = 0; l < L; ++l) {
        trips.emplace_back(N + l, N + L, 1.0);
        trips.emplace_back(N + L, N + l, 1.0);
    }

    matrix_.resize(N + L + 1, N + L + 1);
    matrix_.setFromTriplets(trips.begin(), trips.end());
    matrix_.makeCompressed();

    lu_ = std::make_unique<Eigen::SparseLU<SparseMat>>();
    lu_->compute(matrix_);
    SolveStats::factorizations.fetch_add(1, std::memory_order_relaxed);
    if (lu_->info() != Eigen::Success) {
        throw NumericalError("CEM system factorization failed (singular or indefinite beyond "
                             "pivoting tolerance)");
    }
}

Eigen::MatrixXd CEMSystem::solve(const Eigen::MatrixXd& rhs) const {
    if (rhs.rows() != dim()) {
        throw ValidationError("CEM solve: rhs has " + std::to_string(rhs.rows()) +
                              " rows, system dimension is " + std::to_string(dim()));
    }
    std::lock_guard<std::mutex> lock(solve_mutex_);
    Eigen::MatrixXd x = lu_->solve(rhs);
    SolveStats::solves.fetch_add(rhs.cols(), std::memory_order_relaxed);
    if (lu_->info() != Eigen::Success) {
        throw NumericalError("CEM solve failed");
    }
    return x;
}

CEMSystem assemble_system(const TriMesh& mesh, const Conductivity& sigma,
                          const ContactImpedances& z) {
    return CEMSystem(mesh, sigma, z);
}

ElectrodeFrame solve_forward(const CEMSystem& system, const CurrentPatternSet& patterns,
                             bool keep_interior) {
    patterns.validate();
    const int N = system.n_vertices();
    const int L = system.n_electrodes();
    if (patterns.n_electrodes() != L) {
        throw ValidationError("pattern set has " + std::to_string(patterns.n_electrodes()) +
                              " electrodes, system has " + std::to_string(L));
    }
    const int K = patterns.n_patterns();
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(system.dim(), K);
    rhs.middleRows(N, L) = patterns.patterns.transpose();

    const Eigen::MatrixXd x = system.solve(rhs);

    ElectrodeFrame frame;
    frame.electrode_potentials = x.middleRows(N, L).transpose();
    if (keep_interior) frame.interior = x.topRows(N).transpose();
    frame.pattern_ids = patterns.pattern_ids;
    if (frame.pattern_ids.empty()) {
        for (int k = 0; k < K; ++k) frame.pattern_ids.push_back(k);
    }
    return frame;
}

MeasurementVector apply_measurement_operator(const ElectrodeFrame& frame,
                                             const LevelConfig& cfg) {
    const int L = cfg.n_electrodes;
    if (frame.electrode_potentials.cols() != L) {
        throw ValidationError("frame has " + std::to_string(frame.electrode_potentials.cols()) +
                              " electrodes, level config expects " + std::to_string(L));
    }

    MeasurementVector out;
    out.level = cfg.level;
    out.values.resize(cfg.n_rows());

    Eigen::Index row = 0;
    for (int k : cfg.active_patterns) {
        // locate the pattern inside the frame
        const auto it = std::find(frame.pattern_ids.begin(), frame.pattern_ids.end(), k);
        if (it == frame.pattern_ids.end()) {
            throw ValidationError("frame does not cover pattern " + std::to_string(k) +
                                  " required at level " + std::to_string(cfg.level));
        }
        const auto fr = static_cast<Eigen::Index>(it - frame.pattern_ids.begin());
        for (int l = 1; l <= L - 1; ++l) {
            if (!cfg.row_mask[static_cast<std::size_t>(k * (L - 1) + (l - 1))]) continue;
            out.values[row++] =
                frame.electrode_potentials(fr, l) - frame.electrode_potentials(fr, l - 1);
        }
        out.pattern_ids.push_back(k);
    }
    return out;
}

double fit_background_conductivity(const TriMesh& mesh, const ContactImpedances& z,
                                   const CurrentPatternSet& patterns,
                                   const MeasurementVector& u_ref) {
    if (u_ref.level != 1) {
        throw ValidationError("background fit expects level-1 reference measurements");
    }
    const LevelConfig cfg = level_config(1, mesh.n_electrodes());
    if (u_ref.values.size() != cfg.n_rows()) {
        throw ValidationError("background fit: reference has " +
                              std::to_string(u_ref.values.size()) + " rows, expected " +
                              std::to_string(cfg.n_rows()));
    }

    auto misfit = [&](double log_c) {
        const Conductivity sigma =
            Conductivity::homogeneous(mesh.n_elements(), std::exp(log_c));
        const ElectrodeFrame frame = solve_forward(assemble_system(mesh, sigma, z), patterns);
        const MeasurementVector m = apply_measurement_operator(frame, cfg);
        return (m.values - u_ref.values).squaredNorm();
    };

    // golden-section on log-conductivity; 1e-6 width there is 1e-6 relative in c
    double a = std::log(1e-3), b = std::log(1e3);
    const double lo = a, hi = b;
    constexpr double inv_phi = 0.6180339887498949;
    constexpr double tol = 1e-6;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = misfit(x1);
    double f2 = misfit(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = misfit(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = misfit(x2);
        }
    }
    const double best = 0.5 * (a + b);
    if (best - lo < 1e-3 || hi - best < 1e-3) {
        throw NumericalError("background fit: no interior minimum in [1e-3, 1e3] Ohm^-1 "
                             "(reference measurements inconsistent with a homogeneous tank)");
    }
    return std::exp(best);
}

void save_measurement(const MeasurementVector& m, const CurrentPatternSet& patterns,
                      const std::filesystem::path& path,
                      const Eigen::MatrixXd* electrode_potentials) {
    nlohmann::json j;
    j["level"] = m.level;
    j["pattern_ids"] = m.pattern_ids;
    j["values"] = std::vector<double>(m.values.data(), m.values.data() + m.values.size());

    nlohmann::json pj;
    pj["n_electrodes"] = patterns.n_electrodes();
    pj["level"] = patterns.level;
    pj["pattern_ids"] = patterns.pattern_ids;
    auto& rows = pj["patterns"] = nlohmann::json::array();
    for (int k = 0; k < patterns.n_patterns(); ++k) {
        rows.push_back(std::vector<double>(patterns.patterns.row(k).begin(),
                                           patterns.patterns.row(k).end()));
    }
    j["injection"] = std::move(pj);

    if (electrode_potentials != nullptr) {
        auto& u = j["electrode_potentials"] = nlohmann::json::array();
        for (Eigen::Index k = 0; k < electrode_potentials->rows(); ++k) {
            u.push_back(std::vector<double>(electrode_potentials->row(k).begin(),
                                            electrode_potentials->row(k).end()));
        }
    }

    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(1) << "\n";
    if (!out) throw IoError("failed writing measurement to " + path.string());
}

MeasurementVector load_measurement(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open measurement file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("measurement file " + path.string() + ": parse error: " + e.what());
    }
    MeasurementVector m;
    try {
        m.level = j.at("level").get<int>();
        m.pattern_ids = j.at("pattern_ids").get<std::vector<int>>();
        const auto vals = j.at("values").get<std::vector<double>>();
        m.values = Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                     static_cast<Eigen::Index>(vals.size()));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("measurement file " + path.string() + ": missing or malformed field: " +
                      e.what());
    }
    return m;
}

}  // namespace eit
