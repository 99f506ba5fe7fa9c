#include "eitkit/jacobian.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>

namespace eit {

std::uint64_t conductivity_hash(const Conductivity& sigma) {
    return hash_doubles({sigma.values.data(), static_cast<std::size_t>(sigma.values.size())});
}

namespace {

struct ElementGrads {
    double area;
    Vec2 grad[3];
};

std::vector<ElementGrads> precompute_grads(const TriMesh& mesh) {
    std::vector<ElementGrads> out(static_cast<std::size_t>(mesh.n_elements()));
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        const Vec2 p0 = mesh.vertices[t[0]], p1 = mesh.vertices[t[1]], p2 = mesh.vertices[t[2]];
        const double twice_area = cross(p1 - p0, p2 - p0);
        auto& g = out[static_cast<std::size_t>(e)];
        g.area = 0.5 * twice_area;
        g.grad[0] = {(p1.y - p2.y) / twice_area, (p2.x - p1.x) / twice_area};
        g.grad[1] = {(p2.y - p0.y) / twice_area, (p0.x - p2.x) / twice_area};
        g.grad[2] = {(p0.y - p1.y) / twice_area, (p1.x - p0.x) / twice_area};
    }
    return out;
}

Eigen::VectorXd flatten_frame(const Eigen::MatrixXd& electrode_potentials) {
    // row-major (k,l) -> k*L + l
    const Eigen::Index K = electrode_potentials.rows();
    const Eigen::Index L = electrode_potentials.cols();
    Eigen::VectorXd flat(K * L);
    for (Eigen::Index k = 0; k < K; ++k) {
        flat.segment(k * L, L) = electrode_potentials.row(k).transpose();
    }
    return flat;
}

}  // namespace

ElectrodeJacobian compute_jacobian_fast(const TriMesh& mesh, const Conductivity& sigma_ref,
                                        const ContactImpedances& z,
                                        const CurrentPatternSet& patterns) {
    const int N = mesh.n_vertices();
    const int L = mesh.n_electrodes();
    const int M = mesh.n_elements();
    const int K = patterns.n_patterns();

    const CEMSystem system(mesh, sigma_ref, z);  // the only factorization
    const ElectrodeFrame frame = solve_forward(system, patterns, /*keep_interior=*/true);

    // electrode responses W_r to unit loads at each vertex r, solved in
    // batches against the already-factorized system
    Eigen::MatrixXd W(L, N);
    constexpr int kBatch = 256;
    for (int start = 0; start < N; start += kBatch) {
        const int cols = std::min(kBatch, N - start);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(system.dim(), cols);
        for (int c = 0; c < cols; ++c) rhs(start + c, c) = 1.0;
        const Eigen::MatrixXd x = system.solve(rhs);
        W.middleCols(start, cols) = x.middleRows(N, L);
    }

    const auto grads = precompute_grads(mesh);

    ElectrodeJacobian jac;
    jac.matrix.resize(static_cast<Eigen::Index>(K) * L, M);
    jac.n_electrodes = L;
    jac.n_patterns = K;
    jac.pattern_ids = frame.pattern_ids;
    jac.sigma_ref = sigma_ref;
    jac.mesh_hash = mesh_hash(mesh);
    jac.sigma_hash = conductivity_hash(sigma_ref);

    // column j: sum over the <=3 vertices of element j of f_v * W_col(v),
    // with f_v = -area * grad(u^k).grad(phi_v)
    for (int j = 0; j < M; ++j) {
        const auto& t = mesh.elements[static_cast<std::size_t>(j)];
        const auto& g = grads[static_cast<std::size_t>(j)];
        auto col = jac.matrix.col(j);
        for (int k = 0; k < K; ++k) {
            Vec2 grad_u{0.0, 0.0};
            for (int v = 0; v < 3; ++v) {
                grad_u = grad_u + frame.interior(k, t[v]) * g.grad[v];
            }
            Eigen::Matrix<double, Eigen::Dynamic, 1> contrib = Eigen::VectorXd::Zero(L);
            for (int v = 0; v < 3; ++v) {
                const double f_v = -g.area * dot(grad_u, g.grad[v]);
                contrib += f_v * W.col(t[v]);
            }
            col.segment(static_cast<Eigen::Index>(k) * L, L) = contrib;
        }
    }
    if (!jac.matrix.allFinite()) {
        throw NumericalError("Jacobian has non-finite entries (degenerate system?)");
    }
    return jac;
}

Eigen::MatrixXd fd_jacobian_columns(const TriMesh& mesh, const Conductivity& sigma_ref,
                                    const ContactImpedances& z,
                                    const CurrentPatternSet& patterns,
                                    std::span<const int> element_ids, double eps) {
    if (!(eps > 0.0)) throw ConfigError("finite differences: eps must be > 0");
    const double cancellation_floor = 1e3 * 2.2e-16 * sigma_ref.values.cwiseAbs().maxCoeff();
    if (eps < cancellation_floor) {
        std::cerr << "warning: fd step " << eps << " is below the cancellation floor "
                  << cancellation_floor << "; columns may be dominated by roundoff\n";
    }

    const int K = patterns.n_patterns();
    const int L = mesh.n_electrodes();
    Eigen::MatrixXd cols(static_cast<Eigen::Index>(K) * L, element_ids.size());

    for (std::size_t c = 0; c < element_ids.size(); ++c) {
        const int j = element_ids[c];
        if (j < 0 || j >= mesh.n_elements()) {
            throw ConfigError("finite differences: element index " + std::to_string(j) +
                              " out of range [0, " + std::to_string(mesh.n_elements()) + ")");
        }
        Conductivity plus = sigma_ref, minus = sigma_ref;
        plus.values[j] += eps;
        minus.values[j] -= eps;
        const auto u_plus =
            solve_forward(CEMSystem(mesh, plus, z), patterns).electrode_potentials;
        const auto u_minus =
            solve_forward(CEMSystem(mesh, minus, z), patterns).electrode_potentials;
        cols.col(static_cast<Eigen::Index>(c)) =
            flatten_frame((u_plus - u_minus) / (2.0 * eps));
    }
    return cols;
}

ElectrodeJacobian compute_jacobian_fd(const TriMesh& mesh, const Conductivity& sigma_ref,
                                      const ContactImpedances& z,
                                      const CurrentPatternSet& patterns, double eps) {
    std::vector<int> all(static_cast<std::size_t>(mesh.n_elements()));
    for (int j = 0; j < mesh.n_elements(); ++j) all[static_cast<std::size_t>(j)] = j;

    ElectrodeJacobian jac;
    jac.matrix = fd_jacobian_columns(mesh, sigma_ref, z, patterns, all, eps);
    jac.n_electrodes = mesh.n_electrodes();
    jac.n_patterns = patterns.n_patterns();
    jac.pattern_ids = patterns.pattern_ids;
    jac.sigma_ref = sigma_ref;
    jac.mesh_hash = mesh_hash(mesh);
    jac.sigma_hash = conductivity_hash(sigma_ref);
    return jac;
}

MeasurementJacobian reduce_jacobian(const ElectrodeJacobian& jac, const LevelConfig& cfg) {
    const int L = jac.n_electrodes;
    if (cfg.n_electrodes != L) {
        throw ValidationError("level config electrode count " + std::to_string(cfg.n_electrodes) +
                              " does not match Jacobian electrode count " + std::to_string(L));
    }

    MeasurementJacobian out;
    out.level = cfg.level;
    out.mesh_hash = jac.mesh_hash;
    out.sigma_hash = jac.sigma_hash;
    out.matrix.resize(cfg.n_rows(), jac.matrix.cols());

    Eigen::Index row = 0;
    for (int k : cfg.active_patterns) {
        const auto it = std::find(jac.pattern_ids.begin(), jac.pattern_ids.end(), k);
        if (it == jac.pattern_ids.end()) {
            throw ValidationError("Jacobian does not cover pattern " + std::to_string(k) +
                                  "; it must be built at level 1");
        }
        const auto kj = static_cast<Eigen::Index>(it - jac.pattern_ids.begin());
        for (int l = 1; l <= L - 1; ++l) {
            if (!cfg.row_mask[static_cast<std::size_t>(k * (L - 1) + (l - 1))]) continue;
            out.matrix.row(row++) =
                jac.matrix.row(kj * L + l) - jac.matrix.row(kj * L + l - 1);
        }
        out.pattern_ids.push_back(k);
    }
    return out;
}

namespace {

constexpr char kJacMagic[8] = {'E', 'I', 'T', 'J', 'A', 'C', '1', '\0'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("jacobian cache " + path.string() + ": truncated");
    return value;
}

}  // namespace

void save_jacobian_cache(const MeasurementJacobian& jac, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kJacMagic, sizeof(kJacMagic));
    write_pod(out, static_cast<std::uint64_t>(jac.matrix.rows()));
    write_pod(out, static_cast<std::uint64_t>(jac.matrix.cols()));
    write_pod(out, static_cast<std::int32_t>(jac.level));
    write_pod(out, jac.sigma_hash);
    write_pod(out, jac.mesh_hash);
    write_pod(out, static_cast<std::uint64_t>(jac.pattern_ids.size()));
    for (int id : jac.pattern_ids) write_pod(out, static_cast<std::int32_t>(id));
    // row-major payload, written in one pass
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const RowMajor payload = jac.matrix;
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(sizeof(double) * payload.size()));
    if (!out) throw IoError("failed writing jacobian cache to " + path.string());
}

MeasurementJacobian load_jacobian_cache(const std::filesystem::path& path,
                                        std::uint64_t expect_mesh_hash,
                                        std::uint64_t expect_sigma_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open jacobian cache " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kJacMagic, sizeof(magic)) != 0) {
        throw IoError("jacobian cache " + path.string() + ": bad magic");
    }
    MeasurementJacobian jac;
    const auto rows = read_pod<std::uint64_t>(in, path);
    const auto cols = read_pod<std::uint64_t>(in, path);
    jac.level = read_pod<std::int32_t>(in, path);
    jac.sigma_hash = read_pod<std::uint64_t>(in, path);
    jac.mesh_hash = read_pod<std::uint64_t>(in, path);
    const auto n_ids = read_pod<std::uint64_t>(in, path);
    for (std::uint64_t i = 0; i < n_ids; ++i) {
        jac.pattern_ids.push_back(read_pod<std::int32_t>(in, path));
    }
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor payload(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(sizeof(double) * payload.size()));
    if (!in) throw IoError("jacobian cache " + path.string() + ": truncated");
    jac.matrix = payload;
    if (expect_mesh_hash != 0 && jac.mesh_hash != expect_mesh_hash) {
        throw ValidationError("jacobian cache " + path.string() +
                              ": mesh hash mismatch (stale cache?)");
    }
    if (expect_sigma_hash != 0 && jac.sigma_hash != expect_sigma_hash) {
        throw ValidationError("jacobian cache " + path.string() +
                              ": sigma_ref hash mismatch (stale cache?)");
    }
    return jac;
}

}  // namespace eit
