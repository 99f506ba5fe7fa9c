#ifndef EITKIT_GRID_HPP
#define EITKIT_GRID_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "eitkit/mesh.hpp"

namespace eit {

inline constexpr int kGridSize = 256;

// Row-major n x n scalar image covering the tank bounding square [-R, R]^2.
// Pixel (row r, col c) is centered at x = -R + (c+0.5)*2R/n,
// y = R - (r+0.5)*2R/n (row 0 at the top). The tank disk is inscribed, so the
// disk mask depends only on n.
struct PixelGrid {
    int n = kGridSize;
    std::vector<double> v;

    PixelGrid() : v(static_cast<std::size_t>(kGridSize) * kGridSize, 0.0) {}
    explicit PixelGrid(int size, double fill = 0.0)
        : n(size), v(static_cast<std::size_t>(size) * size, fill) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * n + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * n + c]; }
};

// Segmentation map: 0 background, 1 resistive, 2 conductive. Pixels outside
// the inscribed disk are always background.
struct ClassMap {
    int n = kGridSize;
    std::vector<std::uint8_t> v;

    ClassMap() : v(static_cast<std::size_t>(kGridSize) * kGridSize, 0) {}
    explicit ClassMap(int size, std::uint8_t fill = 0)
        : n(size), v(static_cast<std::size_t>(size) * size, fill) {}

    std::uint8_t& at(int r, int c) { return v[static_cast<std::size_t>(r) * n + c]; }
    std::uint8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * n + c]; }

    void validate() const;  // values in {0,1,2}, disk mask respected
};

inline bool pixel_in_disk(int r, int c, int n) {
    const double dx = c + 0.5 - 0.5 * n;
    const double dy = r + 0.5 - 0.5 * n;
    return dx * dx + dy * dy <= 0.25 * static_cast<double>(n) * n;
}

inline Vec2 pixel_center(int r, int c, int n, double radius) {
    const double step = 2.0 * radius / n;
    return {-radius + (c + 0.5) * step, radius - (r + 0.5) * step};
}

void apply_disk_mask(ClassMap& map);
void apply_disk_mask(PixelGrid& grid);

// 0/1 image of one class, as input for binary-map scoring.
PixelGrid binary_class_map(const ClassMap& map, std::uint8_t cls);

// Grid files: <stem>.bin holds raw little-endian row-major samples
// (float32 for PixelGrid, uint8 for ClassMap); <stem>.json is the sidecar
// {shape, dtype, disk_radius}. ClassMaps may instead be stored as a single
// JSON document with an inline "data" array.
void save_grid(const PixelGrid& grid, const std::filesystem::path& stem, double disk_radius);
PixelGrid load_grid(const std::filesystem::path& stem);
// tank radius recorded in a float32 grid's sidecar
double grid_disk_radius(const std::filesystem::path& stem);

void save_class_map(const ClassMap& map, const std::filesystem::path& stem, double disk_radius);
void save_class_map_json(const ClassMap& map, const std::filesystem::path& path,
                         double disk_radius);
// Accepts either <stem> (binary + sidecar) or a path to the JSON-wrapped form.
ClassMap load_class_map(const std::filesystem::path& path);

}  // namespace eit

#endif
