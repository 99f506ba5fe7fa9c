#ifndef EITKIT_MESH_HPP
#define EITKIT_MESH_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "eitkit/common.hpp"

namespace eit {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

// Parameters for the built-in uniform disk mesher. Electrodes are equispaced
// on the boundary starting at angle pi/2, numbered counter-clockwise; each
// covers `electrode_coverage` of its angular pitch.
struct DiskMeshSpec {
    double radius = 0.115;            // tank radius [m]
    double mesh_size_h = 0.005;       // target edge length [m]
    int n_electrodes = 32;
    double electrode_coverage = 0.5;  // fraction of pitch, in (0,1)

    void validate() const;  // throws ConfigError naming the violated constraint
};

// Triangular mesh of the disk with electrode boundary arcs. Potentials live
// on vertices (P1, dim N), conductivity on elements (P0, dim M). Immutable
// after construction; safe to share across threads.
struct TriMesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> elements;        // CCW vertex triples
    std::vector<std::array<int, 2>> boundary_edges;  // ordered CCW loop
    // boundary edges covered by electrode l (0-based), each a contiguous arc
    std::vector<std::vector<std::array<int, 2>>> electrode_edges;
    double radius = 0.0;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_elements() const { return static_cast<int>(elements.size()); }
    int n_electrodes() const { return static_cast<int>(electrode_edges.size()); }

    double element_area(int e) const;
    Vec2 element_centroid(int e) const;
    double total_area() const;
    double edge_length(const std::array<int, 2>& edge) const;
    double electrode_length(int l) const;
    // longest edge over all elements
    double max_element_diameter() const;
};

// Checks every TriMesh invariant; throws ValidationError on the first
// violation, naming the offending entity.
void validate_mesh(const TriMesh& mesh);

// Structured concentric-ring triangulation with boundary vertices snapped to
// electrode arc endpoints.
TriMesh build_disk_mesh(const DiskMeshSpec& spec);

// Elements are adjacent iff they share an edge; deg(i) in {0,1,2,3}.
std::vector<std::vector<int>> element_adjacency(const TriMesh& mesh);

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path);
TriMesh load_mesh(const std::filesystem::path& path);

// Content hash over vertices, elements and electrode arcs; used to key
// Jacobian caches and dataset provenance.
std::uint64_t mesh_hash(const TriMesh& mesh);

}  // namespace eit

#endif
