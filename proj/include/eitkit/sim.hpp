#ifndef EITKIT_SIM_HPP
#define EITKIT_SIM_HPP

#include <array>
#include <optional>
#include <string>

#include <json.hpp>

#include "eitkit/cem.hpp"
#include "eitkit/grid.hpp"

namespace eit {

struct ShapeWeights {
    double polygon = 1.0;
    double circle = 1.0;
    double rectangle = 1.0;
    double blob = 1.0;  // smooth random blob standing in for hand-drawn objects
};

inline constexpr double kResistiveMin = 0.025;
inline constexpr double kResistiveMax = 0.125;
inline constexpr double kConductiveMin = 5.0;
inline constexpr double kConductiveMax = 6.0;

struct PhantomSpec {
    int min_objects = 1;
    int max_objects = 4;
    ShapeWeights shape_weights;
    double min_size = 0.15;  // object radius as fraction of tank radius
    double max_size = 0.35;
    double sigma_bg = kDefaultBackgroundConductivity;
    double radius = 0.115;  // tank radius; object geometry is stored in meters

    void validate() const;
};

struct PhantomObject {
    std::string kind;  // polygon | circle | rectangle | blob
    int cls = 0;       // 1 resistive, 2 conductive
    double conductivity = 0.0;
    std::vector<double> params;
};

struct Phantom {
    ClassMap class_map;
    PixelGrid conductivity_img;
    std::vector<PhantomObject> objects;
    double sigma_bg = kDefaultBackgroundConductivity;
    double radius = 0.115;
};

// Deterministic for a fixed seed. Objects are placed by rejection sampling
// with at least one pixel of separation and full containment in the tank
// disk; fails after 1000 attempts per object.
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

// Element value = image value at the pixel containing the element centroid.
Eigen::VectorXd pixel_to_mesh(const PixelGrid& img, const TriMesh& mesh);

enum class MeshToPixelMode {
    kSmooth,   // element-to-vertex averaging followed by P1 evaluation
    kNearest,  // value of the containing element
};

// Precomputed linear interpolation operator from P0 mesh vectors to the
// pixel grid; pixels outside the disk map to 0.
class MeshToPixel {
public:
    explicit MeshToPixel(const TriMesh& mesh, int grid_size = kGridSize,
                         MeshToPixelMode mode = MeshToPixelMode::kSmooth);

    PixelGrid apply(const Eigen::VectorXd& element_values) const;

private:
    int n_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> weights_;  // (n*n) x M
};

PixelGrid mesh_to_pixel(const Eigen::VectorXd& element_values, const TriMesh& mesh,
                        int grid_size = kGridSize,
                        MeshToPixelMode mode = MeshToPixelMode::kSmooth);

// u + Sigma^(1/2) xi with xi standard normal; deterministic per seed.
MeasurementVector add_noise(const MeasurementVector& u, const NoiseModel& noise,
                            std::uint64_t seed);

struct DatasetConfig {
    std::array<int, kNumLevels> n_per_level = {1, 1, 1, 1, 1, 1, 1};
    std::uint64_t master_seed = 0;
    PhantomSpec phantom;
    double contact_impedance = kDefaultContactImpedance;
    double injection_current = kDefaultInjectionCurrent;
    double noise_scale = 1.0;  // 0 disables noise (measurements stay exact)
    int threads = 1;
};

// Batch factory: simulates n_per_level[k] samples per level under
// out_dir/level_<k>/sample_<id>/ and writes manifest.json. Samples already
// complete on disk are skipped, failed forward solves are recorded and
// generation continues. Returns the manifest.
nlohmann::json generate_dataset(const DatasetConfig& config, const TriMesh& mesh,
                                const std::filesystem::path& out_dir);

}  // namespace eit

#endif
