#include "eitkit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

namespace eit {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double signed_area(Vec2 a, Vec2 b, Vec2 c) { return 0.5 * cross(b - a, c - a); }

std::string fmt_edge(const std::array<int, 2>& e) {
    return "(" + std::to_string(e[0]) + "," + std::to_string(e[1]) + ")";
}

}  // namespace

void DiskMeshSpec::validate() const {
    if (!(radius > 0.0)) {
        throw ConfigError("mesh spec: radius must be > 0, got " + std::to_string(radius));
    }
    if (!(mesh_size_h > 0.0) || !(mesh_size_h < radius)) {
        throw ConfigError("mesh spec: mesh_size_h must satisfy 0 < h < radius, got h=" +
                          std::to_string(mesh_size_h) + ", radius=" + std::to_string(radius));
    }
    if (n_electrodes < 2) {
        throw ConfigError("mesh spec: n_electrodes must be >= 2, got " +
                          std::to_string(n_electrodes));
    }
    if (!(electrode_coverage > 0.0) || !(electrode_coverage < 1.0)) {
        throw ConfigError("mesh spec: electrode_coverage must be in (0,1), got " +
                          std::to_string(electrode_coverage));
    }
}

double TriMesh::element_area(int e) const {
    const auto& t = elements[static_cast<std::size_t>(e)];
    return signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
}

Vec2 TriMesh::element_centroid(int e) const {
    const auto& t = elements[static_cast<std::size_t>(e)];
    const Vec2 s = vertices[t[0]] + vertices[t[1]] + vertices[t[2]];
    return {s.x / 3.0, s.y / 3.0};
}

double TriMesh::total_area() const {
    double area = 0.0;
    for (int e = 0; e < n_elements(); ++e) area += element_area(e);
    return area;
}

double TriMesh::edge_length(const std::array<int, 2>& edge) const {
    return norm(vertices[edge[1]] - vertices[edge[0]]);
}

double TriMesh::electrode_length(int l) const {
    double len = 0.0;
    for (const auto& e : electrode_edges[static_cast<std::size_t>(l)]) len += edge_length(e);
    return len;
}

double TriMesh::max_element_diameter() const {
    double d = 0.0;
    for (const auto& t : elements) {
        d = std::max(d, norm(vertices[t[1]] - vertices[t[0]]));
        d = std::max(d, norm(vertices[t[2]] - vertices[t[1]]));
        d = std::max(d, norm(vertices[t[0]] - vertices[t[2]]));
    }
    return d;
}

void validate_mesh(const TriMesh& mesh) {
    const int n = mesh.n_vertices();
    if (n < 3 || mesh.n_elements() < 1) {
        throw ValidationError("mesh: needs at least 3 vertices and 1 element");
    }
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        for (int v : t) {
            if (v < 0 || v >= n) {
                throw ValidationError("mesh: element " + std::to_string(e) +
                                      " references vertex " + std::to_string(v) +
                                      " out of range");
            }
        }
        if (mesh.element_area(e) <= 1e-14) {
            throw ValidationError("mesh: element " + std::to_string(e) +
                                  " is degenerate or clockwise (signed area " +
                                  std::to_string(mesh.element_area(e)) + ")");
        }
    }

    // undirected edge -> number of elements containing it
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : mesh.elements) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            edge_count[{a, b}]++;
        }
    }
    for (const auto& [edge, count] : edge_count) {
        if (count > 2) {
            throw ValidationError("mesh: edge (" + std::to_string(edge.first) + "," +
                                  std::to_string(edge.second) + ") shared by " +
                                  std::to_string(count) + " elements");
        }
    }

    auto is_boundary = [&](std::array<int, 2> e) {
        int a = e[0], b = e[1];
        if (a > b) std::swap(a, b);
        auto it = edge_count.find({a, b});
        return it != edge_count.end() && it->second == 1;
    };

    for (const auto& e : mesh.boundary_edges) {
        if (!is_boundary(e)) {
            throw ValidationError("mesh: listed boundary edge " + fmt_edge(e) +
                                  " does not lie on the boundary");
        }
    }

    std::set<std::pair<int, int>> seen;
    for (int l = 0; l < mesh.n_electrodes(); ++l) {
        const auto& edges = mesh.electrode_edges[static_cast<std::size_t>(l)];
        if (edges.empty()) {
            throw ValidationError("mesh: electrode " + std::to_string(l + 1) +
                                  " has no boundary edges");
        }
        for (const auto& e : edges) {
            if (!is_boundary(e)) {
                throw ValidationError("mesh: electrode " + std::to_string(l + 1) + " edge " +
                                      fmt_edge(e) + " is not a boundary edge");
            }
            int a = e[0], b = e[1];
            if (a > b) std::swap(a, b);
            if (!seen.insert({a, b}).second) {
                throw ValidationError("mesh: electrode " + std::to_string(l + 1) + " edge " +
                                      fmt_edge(e) + " already assigned to another electrode");
            }
        }
        // contiguous arc: consecutive edges must chain head-to-tail
        for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
            if (edges[k][1] != edges[k + 1][0]) {
                throw ValidationError("mesh: electrode " + std::to_string(l + 1) +
                                      " edges are not a contiguous arc at " +
                                      fmt_edge(edges[k]));
            }
        }
    }

    if (mesh.radius > 0.0) {
        const double disk = std::numbers::pi * mesh.radius * mesh.radius;
        const double area = mesh.total_area();
        if (area > disk * (1.0 + 1e-9) || area < 0.5 * disk) {
            throw ValidationError("mesh: total area " + std::to_string(area) +
                                  " inconsistent with disk of radius " +
                                  std::to_string(mesh.radius));
        }
    }
}

namespace {

struct BoundaryLayout {
    std::vector<double> angles;            // CCW, within [start, start + 2pi)
    std::vector<int> electrode_of_edge;    // per boundary edge k=(v_k,v_{k+1}): -1 = gap
};

// Subdivides the 2L alternating electrode/gap arcs so arc endpoints coincide
// with vertices and every sub-edge is at most h long (along the arc).
BoundaryLayout layout_boundary(const DiskMeshSpec& spec) {
    const int L = spec.n_electrodes;
    const double pitch = kTwoPi / L;
    const double width = spec.electrode_coverage * pitch;
    const double start = std::numbers::pi / 2.0 - width / 2.0;  // electrode 1 arc start

    BoundaryLayout out;
    for (int l = 0; l < L; ++l) {
        const double a0 = start + l * pitch;
        const struct {
            double from, to;
            int electrode;
        } arcs[2] = {{a0, a0 + width, l}, {a0 + width, a0 + pitch, -1}};
        for (const auto& arc : arcs) {
            const double arc_len = (arc.to - arc.from) * spec.radius;
            const int divisions = std::max(1, static_cast<int>(std::ceil(arc_len / spec.mesh_size_h)));
            for (int d = 0; d < divisions; ++d) {
                out.angles.push_back(arc.from + (arc.to - arc.from) * d / divisions);
                out.electrode_of_edge.push_back(arc.electrode);
            }
        }
    }
    return out;
}

// Triangulates the annulus between two angle-sorted concentric vertex rings
// by merging them in angular order.
void zipper_rings(const std::vector<int>& inner_ids, const std::vector<double>& inner_angles,
                  const std::vector<int>& outer_ids, const std::vector<double>& outer_angles,
                  std::vector<std::array<int, 3>>& elements) {
    const int p = static_cast<int>(inner_ids.size());
    const int q = static_cast<int>(outer_ids.size());

    // unwrap both rings from the inner ring's first angle
    const double base = inner_angles[0];
    auto unwrap = [&](double a) {
        double u = std::fmod(a - base, kTwoPi);
        if (u < 0) u += kTwoPi;
        return u;
    };

    std::vector<int> in_order(p), out_order(q);
    for (int i = 0; i < p; ++i) in_order[i] = i;
    for (int j = 0; j < q; ++j) out_order[j] = j;
    std::sort(in_order.begin(), in_order.end(), [&](int a, int b) {
        return unwrap(inner_angles[a]) < unwrap(inner_angles[b]);
    });
    std::sort(out_order.begin(), out_order.end(), [&](int a, int b) {
        return unwrap(outer_angles[a]) < unwrap(outer_angles[b]);
    });

    std::vector<double> ia(p + 1), oa(q + 1);
    for (int i = 0; i < p; ++i) ia[i] = unwrap(inner_angles[in_order[i]]);
    for (int j = 0; j < q; ++j) oa[j] = unwrap(outer_angles[out_order[j]]);
    ia[p] = ia[0] + kTwoPi;
    oa[q] = oa[0] + kTwoPi;

    auto inner_at = [&](int i) { return inner_ids[in_order[i % p]]; };
    auto outer_at = [&](int j) { return outer_ids[out_order[j % q]]; };

    int i = 0, j = 0;
    while (i < p || j < q) {
        const bool advance_outer =
            (i == p) || (j < q && oa[j + 1] <= ia[i + 1]);
        if (advance_outer) {
            elements.push_back({outer_at(j), outer_at(j + 1), inner_at(i)});
            ++j;
        } else {
            elements.push_back({inner_at(i), outer_at(j), inner_at(i + 1)});
            ++i;
        }
    }
}

}  // namespace

TriMesh build_disk_mesh(const DiskMeshSpec& spec) {
    spec.validate();

    const BoundaryLayout boundary = layout_boundary(spec);
    const int n_boundary = static_cast<int>(boundary.angles.size());
    if (n_boundary < 3) {
        throw ConfigError("mesh spec: boundary resolves to fewer than 3 vertices");
    }

    const int n_rings = std::max(1, static_cast<int>(std::lround(spec.radius / spec.mesh_size_h)));

    TriMesh mesh;
    mesh.radius = spec.radius;
    mesh.vertices.push_back({0.0, 0.0});  // ring 0: center

    std::vector<int> prev_ids = {0};
    std::vector<double> prev_angles = {0.0};

    for (int ring = 1; ring <= n_rings; ++ring) {
        const double r = spec.radius * ring / n_rings;
        std::vector<int> ids;
        std::vector<double> angles;

        if (ring == n_rings) {
            angles = boundary.angles;
            for (double a : angles) {
                ids.push_back(mesh.n_vertices());
                mesh.vertices.push_back({r * std::cos(a), r * std::sin(a)});
            }
        } else {
            const int count = std::max(
                6, static_cast<int>(std::lround(static_cast<double>(n_boundary) * ring / n_rings)));
            const double phase =
                std::numbers::pi / 2.0 + (ring % 2 ? 0.5 : 0.0) * kTwoPi / count;
            for (int k = 0; k < count; ++k) {
                const double a = phase + kTwoPi * k / count;
                ids.push_back(mesh.n_vertices());
                mesh.vertices.push_back({r * std::cos(a), r * std::sin(a)});
                angles.push_back(a);
            }
        }

        if (ring == 1) {
            // fan from the center
            const int m = static_cast<int>(ids.size());
            for (int k = 0; k < m; ++k) {
                mesh.elements.push_back({0, ids[k], ids[(k + 1) % m]});
            }
        } else {
            zipper_rings(prev_ids, prev_angles, ids, angles, mesh.elements);
        }
        prev_ids = std::move(ids);
        prev_angles = std::move(angles);
    }

    // boundary edges follow the snapped outer ring in CCW order
    mesh.electrode_edges.assign(static_cast<std::size_t>(spec.n_electrodes), {});
    for (int k = 0; k < n_boundary; ++k) {
        const std::array<int, 2> edge = {prev_ids[static_cast<std::size_t>(k)],
                                         prev_ids[static_cast<std::size_t>((k + 1) % n_boundary)]};
        mesh.boundary_edges.push_back(edge);
        const int electrode = boundary.electrode_of_edge[static_cast<std::size_t>(k)];
        if (electrode >= 0) {
            mesh.electrode_edges[static_cast<std::size_t>(electrode)].push_back(edge);
        }
    }

    validate_mesh(mesh);
    return mesh;
}

namespace {

// edges used by exactly one element, oriented as in their CCW triangle and
// chained into a loop starting from the smallest vertex index
std::vector<std::array<int, 2>> derive_boundary_loop(const TriMesh& mesh) {
    std::map<std::pair<int, int>, int> count;
    for (const auto& t : mesh.elements) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            count[{a, b}]++;
        }
    }
    std::map<int, int> next;  // oriented boundary successor per vertex
    for (const auto& t : mesh.elements) {
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            int lo = std::min(a, b), hi = std::max(a, b);
            if (count[{lo, hi}] == 1) next[a] = b;
        }
    }
    std::vector<std::array<int, 2>> loop;
    if (next.empty()) return loop;
    const int start = next.begin()->first;
    int v = start;
    do {
        const auto it = next.find(v);
        if (it == next.end()) {
            throw ValidationError("mesh: boundary edges do not form a closed loop");
        }
        loop.push_back({v, it->second});
        v = it->second;
    } while (v != start && loop.size() <= next.size());
    if (v != start) {
        throw ValidationError("mesh: boundary is not a single closed loop");
    }
    return loop;
}

}  // namespace

std::vector<std::vector<int>> element_adjacency(const TriMesh& mesh) {
    std::map<std::pair<int, int>, std::array<int, 2>> edge_elems;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto& t = mesh.elements[static_cast<std::size_t>(e)];
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            auto [it, inserted] = edge_elems.try_emplace({a, b}, std::array<int, 2>{e, -1});
            if (!inserted) it->second[1] = e;
        }
    }
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(mesh.n_elements()));
    for (const auto& [edge, pair] : edge_elems) {
        if (pair[1] >= 0) {
            adj[static_cast<std::size_t>(pair[0])].push_back(pair[1]);
            adj[static_cast<std::size_t>(pair[1])].push_back(pair[0]);
        }
    }
    for (auto& row : adj) std::sort(row.begin(), row.end());
    return adj;
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path) {
    nlohmann::json j;
    j["version"] = 1;
    j["radius"] = mesh.radius;
    auto& verts = j["vertices"] = nlohmann::json::array();
    for (const auto& v : mesh.vertices) verts.push_back({v.x, v.y});
    auto& elems = j["elements"] = nlohmann::json::array();
    for (const auto& t : mesh.elements) elems.push_back({t[0], t[1], t[2]});
    auto& boundary = j["boundary_edges"] = nlohmann::json::array();
    for (const auto& e : mesh.boundary_edges) boundary.push_back({e[0], e[1]});
    auto& electrodes = j["electrodes"] = nlohmann::json::array();
    for (int l = 0; l < mesh.n_electrodes(); ++l) {
        nlohmann::json el;
        el["id"] = l + 1;
        auto& edges = el["edges"] = nlohmann::json::array();
        for (const auto& e : mesh.electrode_edges[static_cast<std::size_t>(l)]) {
            edges.push_back({e[0], e[1]});
        }
        electrodes.push_back(std::move(el));
    }

    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(1) << "\n";
    if (!out) throw IoError("failed writing mesh to " + path.string());
}

TriMesh load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mesh file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("mesh file " + path.string() + ": parse error: " + e.what());
    }

    TriMesh mesh;
    try {
        mesh.radius = j.at("radius").get<double>();
        for (const auto& v : j.at("vertices")) {
            mesh.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
        }
        for (const auto& t : j.at("elements")) {
            mesh.elements.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
        }
        if (j.contains("boundary_edges")) {
            for (const auto& e : j.at("boundary_edges")) {
                mesh.boundary_edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
            }
        } else {
            // minimal schema: recover the boundary loop from the elements
            mesh.boundary_edges = derive_boundary_loop(mesh);
        }
        std::map<int, std::vector<std::array<int, 2>>> by_id;
        for (const auto& el : j.at("electrodes")) {
            auto& edges = by_id[el.at("id").get<int>()];
            for (const auto& e : el.at("edges")) {
                edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
            }
        }
        int expect = 1;
        for (auto& [id, edges] : by_id) {
            if (id != expect++) {
                throw IoError("mesh file " + path.string() + ": electrode ids must be 1..L");
            }
            mesh.electrode_edges.push_back(std::move(edges));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError("mesh file " + path.string() + ": missing or malformed field: " + e.what());
    }

    validate_mesh(mesh);
    return mesh;
}

std::uint64_t mesh_hash(const TriMesh& mesh) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = hash_combine(h, static_cast<std::uint64_t>(mesh.n_vertices()));
    h = hash_combine(h, static_cast<std::uint64_t>(mesh.n_elements()));
    h = fnv1a(mesh.vertices.data(), mesh.vertices.size() * sizeof(Vec2), h);
    h = fnv1a(mesh.elements.data(), mesh.elements.size() * sizeof(std::array<int, 3>), h);
    for (const auto& arcs : mesh.electrode_edges) {
        h = fnv1a(arcs.data(), arcs.size() * sizeof(std::array<int, 2>), h);
    }
    h = fnv1a(&mesh.radius, sizeof(double), h);
    return h;
}

}  // namespace eit
