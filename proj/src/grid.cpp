#include "eitkit/grid.hpp"

#include <fstream>

#include <json.hpp>

namespace eit {

void ClassMap::validate() const {
    if (static_cast<std::size_t>(n) * n != v.size()) {
        throw ValidationError("class map: size mismatch");
    }
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const std::uint8_t value = at(r, c);
            if (value > 2) {
                throw ValidationError("class map: value " + std::to_string(value) + " at (" +
                                      std::to_string(r) + "," + std::to_string(c) +
                                      ") outside {0,1,2}");
            }
            if (value != 0 && !pixel_in_disk(r, c, n)) {
                throw ValidationError("class map: non-background pixel outside the tank disk at (" +
                                      std::to_string(r) + "," + std::to_string(c) + ")");
            }
        }
    }
}

void apply_disk_mask(ClassMap& map) {
    for (int r = 0; r < map.n; ++r) {
        for (int c = 0; c < map.n; ++c) {
            if (!pixel_in_disk(r, c, map.n)) map.at(r, c) = 0;
        }
    }
}

void apply_disk_mask(PixelGrid& grid) {
    for (int r = 0; r < grid.n; ++r) {
        for (int c = 0; c < grid.n; ++c) {
            if (!pixel_in_disk(r, c, grid.n)) grid.at(r, c) = 0.0;
        }
    }
}

PixelGrid binary_class_map(const ClassMap& map, std::uint8_t cls) {
    PixelGrid out(map.n);
    for (std::size_t i = 0; i < map.v.size(); ++i) {
        out.v[i] = map.v[i] == cls ? 1.0 : 0.0;
    }
    return out;
}

namespace {

void write_sidecar(const std::filesystem::path& stem, int n, const char* dtype,
                   double disk_radius) {
    nlohmann::json j;
    j["shape"] = {n, n};
    j["dtype"] = dtype;
    j["disk_radius"] = disk_radius;
    std::filesystem::path p = stem;
    p += ".json";
    std::ofstream out(p);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out << j.dump(1) << "\n";
}

nlohmann::json read_sidecar(const std::filesystem::path& stem, const char* expect_dtype) {
    std::filesystem::path p = stem;
    p += ".json";
    std::ifstream in(p);
    if (!in) throw IoError("cannot open grid sidecar " + p.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("grid sidecar " + p.string() + ": parse error: " + e.what());
    }
    if (j.at("dtype").get<std::string>() != expect_dtype) {
        throw IoError("grid sidecar " + p.string() + ": dtype is " +
                      j.at("dtype").get<std::string>() + ", expected " + expect_dtype);
    }
    return j;
}

}  // namespace

void save_grid(const PixelGrid& grid, const std::filesystem::path& stem, double disk_radius) {
    std::filesystem::path p = stem;
    p += ".bin";
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    std::vector<float> buf(grid.v.size());
    for (std::size_t i = 0; i < grid.v.size(); ++i) buf[i] = static_cast<float>(grid.v[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw IoError("failed writing grid to " + p.string());
    write_sidecar(stem, grid.n, "float32", disk_radius);
}

PixelGrid load_grid(const std::filesystem::path& stem) {
    const nlohmann::json sidecar = read_sidecar(stem, "float32");
    const int n = sidecar.at("shape").at(0).get<int>();
    std::filesystem::path p = stem;
    p += ".bin";
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open grid file " + p.string());
    std::vector<float> buf(static_cast<std::size_t>(n) * n);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw IoError("grid file " + p.string() + ": truncated");
    PixelGrid grid(n);
    for (std::size_t i = 0; i < buf.size(); ++i) grid.v[i] = buf[i];
    return grid;
}

double grid_disk_radius(const std::filesystem::path& stem) {
    return read_sidecar(stem, "float32").at("disk_radius").get<double>();
}

void save_class_map(const ClassMap& map, const std::filesystem::path& stem, double disk_radius) {
    map.validate();
    std::filesystem::path p = stem;
    p += ".bin";
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out.write(reinterpret_cast<const char*>(map.v.data()),
              static_cast<std::streamsize>(map.v.size()));
    if (!out) throw IoError("failed writing class map to " + p.string());
    write_sidecar(stem, map.n, "uint8", disk_radius);
}

void save_class_map_json(const ClassMap& map, const std::filesystem::path& path,
                         double disk_radius) {
    map.validate();
    nlohmann::json j;
    j["shape"] = {map.n, map.n};
    j["dtype"] = "uint8";
    j["disk_radius"] = disk_radius;
    j["data"] = map.v;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump() << "\n";
}

ClassMap load_class_map(const std::filesystem::path& path) {
    // JSON-wrapped form: a .json file with an inline data array
    if (path.extension() == ".json") {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open class map " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw IoError("class map " + path.string() + ": parse error: " + e.what());
        }
        if (!j.contains("data")) {
            throw IoError("class map " + path.string() + ": no inline data array");
        }
        const int n = j.at("shape").at(0).get<int>();
        ClassMap map(n);
        map.v = j.at("data").get<std::vector<std::uint8_t>>();
        if (map.v.size() != static_cast<std::size_t>(n) * n) {
            throw IoError("class map " + path.string() + ": data length does not match shape");
        }
        map.validate();
        return map;
    }

    // binary + sidecar; accept either the stem or the .bin path
    std::filesystem::path stem = path;
    if (stem.extension() == ".bin") stem.replace_extension();
    const nlohmann::json sidecar = read_sidecar(stem, "uint8");
    const int n = sidecar.at("shape").at(0).get<int>();
    std::filesystem::path p = stem;
    p += ".bin";
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open class map " + p.string());
    ClassMap map(n);
    in.read(reinterpret_cast<char*>(map.v.data()), static_cast<std::streamsize>(map.v.size()));
    if (!in) throw IoError("class map " + p.string() + ": truncated");
    map.validate();
    return map;
}

}  // namespace eit
