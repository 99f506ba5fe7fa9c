#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "eitkit/cem.hpp"
#include "eitkit/eval.hpp"
#include "eitkit/mesh.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWorkDir = fs::temp_directory_path() / "eitkit_cli_tests";

int run(const std::string& args) {
    const std::string cmd = std::string(EITKIT_CLI_PATH) + " " + args + " 2>" +
                            (kWorkDir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string last_stderr() {
    std::ifstream in(kWorkDir / "stderr.txt");
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

struct Workspace {
    Workspace() {
        fs::remove_all(kWorkDir);
        fs::create_directories(kWorkDir);
    }
};

const Workspace& workspace() {
    static Workspace w;
    return w;
}

std::string path(const char* name) { return (kWorkDir / name).string(); }

}  // namespace

TEST_CASE("help exits cleanly") {
    workspace();
    CHECK(run("--help") == 0);
    CHECK(run("mesh --help") == 0);
    CHECK(run("nonsense") == 2);
}

TEST_CASE("mesh command writes a valid, deterministic file") {
    workspace();
    REQUIRE(run("mesh --h 0.03 -o " + path("mesh.json")) == 0);
    const eit::TriMesh mesh = eit::load_mesh(path("mesh.json"));
    CHECK(mesh.n_electrodes() == 32);

    const std::string first = read_file(path("mesh.json"));
    REQUIRE(run("mesh --h 0.03 -o " + path("mesh.json")) == 0);
    CHECK(read_file(path("mesh.json")) == first);
}

TEST_CASE("infeasible mesh spec exits 2 and names the constraint") {
    workspace();
    CHECK(run("mesh --h 1.0 --radius 0.1 -o " + path("bad.json")) == 2);
    CHECK(last_stderr().find("mesh_size_h") != std::string::npos);
    CHECK(!fs::exists(path("bad.json")));
}

TEST_CASE("forward: 2356 level-1 values with mean-free potentials") {
    workspace();
    REQUIRE(run("mesh --h 0.03 -o " + path("mesh.json")) == 0);
    REQUIRE(run("forward --mesh " + path("mesh.json") + " --level 1 -o " + path("fwd.json")) == 0);

    nlohmann::json j;
    std::ifstream in(path("fwd.json"));
    in >> j;
    CHECK(j.at("values").size() == 2356);
    double peak = 0.0;
    for (const auto& row : j.at("electrode_potentials")) {
        for (double v : row) peak = std::max(peak, std::abs(v));
    }
    for (const auto& row : j.at("electrode_potentials")) {
        double sum = 0.0;
        for (double v : row) sum += v;
        CHECK(std::abs(sum) < 1e-10 * peak);
    }

    CHECK(run("forward --mesh " + path("missing.json") + " -o " + path("x.json")) == 2);
    CHECK(run("forward -o " + path("x.json")) == 2);  // --mesh is required
    CHECK(run("forward --mesh " + path("mesh.json") + " --level 9 -o " + path("x.json")) == 2);
}

TEST_CASE("simulate-dataset with one sample per level lists 7 samples") {
    workspace();
    REQUIRE(run("mesh --h 0.04 -o " + path("mesh4.json")) == 0);
    REQUIRE(run("simulate-dataset --mesh " + path("mesh4.json") + " --out " + path("ds") +
                " --n-per-level 1 --seed 3") == 0);
    nlohmann::json manifest;
    std::ifstream in(kWorkDir / "ds" / "manifest.json");
    in >> manifest;
    CHECK(manifest.at("samples").size() == 7);
    int total = 0;
    for (int v : manifest.at("counts").at("complete")) total += v;
    CHECK(total == 7);
}

TEST_CASE("end-to-end: simulate, reconstruct, segment, score >= 0.5") {
    workspace();
    REQUIRE(run("mesh --h 0.03 -o " + path("mesh.json")) == 0);
    REQUIRE(run("simulate-dataset --mesh " + path("mesh.json") + " --out " + path("truth") +
                " --n-per-level 1,0,0,0,0,0,0 --seed 11 --noise-scale 0 "
                "--min-objects 1 --max-objects 1 --min-size 0.3 --max-size 0.35") == 0);
    REQUIRE(run("jacobian --mesh " + path("mesh.json") + " --level 1 -o " + path("jac.bin")) == 0);
    REQUIRE(run("reconstruct --mesh " + path("mesh.json") + " --jacobian " + path("jac.bin") +
                " --delta-u " + path("truth/level_1/sample_0000/delta_u.json") + " --u-ref " +
                path("truth/level_1/u_ref.json") + " --level 1 -o " + path("recon")) == 0);
    fs::create_directories(kWorkDir / "pred" / "level_1" / "sample_0000");
    REQUIRE(run("segment --input " + path("recon") + " --otsu -o " +
                path("pred/level_1/sample_0000/class_map")) == 0);
    REQUIRE(run("score --pred " + path("pred") + " --truth " + path("truth") + " -o " +
                path("report.json")) == 0);

    nlohmann::json report;
    std::ifstream in(path("report.json"));
    in >> report;
    REQUIRE(report.at("samples").size() == 1);
    CHECK(report.at("samples").at(0).at("score").get<double>() >= 0.5);
    CHECK(report.at("overall") == report.at("samples").at(0).at("score"));
}

TEST_CASE("reduced-level pipeline: simulate, reconstruct, segment, score at level 4") {
    workspace();
    REQUIRE(run("mesh --h 0.03 -o " + path("mesh.json")) == 0);
    REQUIRE(run("simulate-dataset --mesh " + path("mesh.json") + " --out " + path("t4") +
                " --n-per-level 0,0,0,1,0,0,0 --seed 21 --noise-scale 0 "
                "--min-objects 1 --max-objects 1 --min-size 0.3 --max-size 0.35") == 0);
    REQUIRE(run("jacobian --mesh " + path("mesh.json") + " --level 4 -o " + path("jac4.bin")) ==
            0);
    REQUIRE(run("reconstruct --mesh " + path("mesh.json") + " --jacobian " + path("jac4.bin") +
                " --delta-u " + path("t4/level_4/sample_0000/delta_u.json") + " --u-ref " +
                path("t4/level_4/u_ref.json") + " --level 4 -o " + path("recon4")) == 0);
    fs::create_directories(kWorkDir / "p4" / "level_4" / "sample_0000");
    REQUIRE(run("segment --input " + path("recon4") + " --otsu -o " +
                path("p4/level_4/sample_0000/class_map")) == 0);
    REQUIRE(run("score --pred " + path("p4") + " --truth " + path("t4") + " -o " +
                path("report4.json")) == 0);

    nlohmann::json report;
    std::ifstream in(path("report4.json"));
    in >> report;
    CHECK(report.at("samples").at(0).at("level") == 4);
    CHECK(report.at("samples").at(0).at("score").get<double>() >= 0.5);

    // a level-4 jacobian cannot serve a level-1 reconstruction
    REQUIRE(run("forward --mesh " + path("mesh.json") + " --level 1 -o " + path("f1.json")) == 0);
    CHECK(run("reconstruct --mesh " + path("mesh.json") + " --jacobian " + path("jac4.bin") +
              " --delta-u " + path("f1.json") + " --u-ref " + path("f1.json") +
              " --level 1 -o " + path("bad")) == 2);
}

TEST_CASE("reconstruct accepts the shipped weights config and custom alphas") {
    workspace();
    REQUIRE(run("mesh --h 0.04 -o " + path("mesh.json")) == 0);
    REQUIRE(run("jacobian --mesh " + path("mesh.json") + " --level 1 -o " + path("jac.bin")) == 0);
    REQUIRE(run("forward --mesh " + path("mesh.json") + " --level 1 -o " + path("ref.json")) == 0);

    const std::string shipped =
        (fs::path(EITKIT_CONFIG_DIR) / "ensemble_weights.json").string();
    CHECK(run("reconstruct --mesh " + path("mesh.json") + " --jacobian " + path("jac.bin") +
              " --delta-u " + path("ref.json") + " --u-ref " + path("ref.json") +
              " --level 1 --weights " + shipped + " --member sm -o " + path("r1")) == 0);
    CHECK(fs::exists(path("r1.bin")));

    CHECK(run("reconstruct --mesh " + path("mesh.json") + " --jacobian " + path("jac.bin") +
              " --delta-u " + path("ref.json") + " --u-ref " + path("ref.json") +
              " --level 1 --alpha-lm 0.5 -o " + path("r2")) == 0);
    CHECK(fs::exists(path("r2.bin")));

    CHECK(run("reconstruct --mesh " + path("mesh.json") + " --jacobian " + path("jac.bin") +
              " --delta-u " + path("ref.json") + " --u-ref " + path("ref.json") +
              " --level 1 --member no-such-label -o " + path("r3")) == 2);

    CHECK(run("reconstruct --mesh " + path("mesh.json") + " --jacobian " + path("jac.bin") +
              " --delta-u " + path("ref.json") + " --u-ref " + path("ref.json") +
              " --level 1 --ensemble -o " + path("ens")) == 0);
    CHECK(fs::exists(path("ens_fsm.bin")));
    CHECK(fs::exists(path("ens_fsm_sm_lm-strong.bin")));
}

TEST_CASE("reconstruct rejects a stale jacobian cache") {
    workspace();
    REQUIRE(run("mesh --h 0.03 -o " + path("mesh.json")) == 0);
    REQUIRE(run("mesh --h 0.04 -o " + path("other.json")) == 0);
    REQUIRE(run("jacobian --mesh " + path("mesh.json") + " --level 1 -o " + path("jac.bin")) == 0);
    REQUIRE(run("forward --mesh " + path("mesh.json") + " --level 1 -o " + path("ref.json")) == 0);
    CHECK(run("reconstruct --mesh " + path("other.json") + " --jacobian " + path("jac.bin") +
              " --delta-u " + path("ref.json") + " --u-ref " + path("ref.json") +
              " --level 1 -o " + path("r")) == 2);
    CHECK(last_stderr().find("hash") != std::string::npos);
}

TEST_CASE("segment requires thresholds or --otsu") {
    workspace();
    REQUIRE(run("mesh --h 0.03 -o " + path("mesh.json")) == 0);
    // build a tiny grid to segment
    REQUIRE(run("simulate-dataset --mesh " + path("mesh.json") + " --out " + path("seg_ds") +
                " --n-per-level 1,0,0,0,0,0,0 --seed 5") == 0);
    const std::string img = path("seg_ds/level_1/sample_0000/conductivity_img");
    CHECK(run("segment --input " + img + " -o " + path("seg_out")) == 2);
    CHECK(run("segment --input " + img + " --t-low -0.5 --t-high 0.5 -o " + path("seg_out")) == 0);
    CHECK(run("segment --input " + img + " --t-low 0.5 --t-high 0.2 -o " + path("seg_out")) == 2);
}

TEST_CASE("score with mismatched shapes exits 2") {
    workspace();
    const auto truth = kWorkDir / "score_truth" / "level_1" / "sample_0000";
    const auto pred = kWorkDir / "score_pred" / "level_1" / "sample_0000";
    fs::create_directories(truth);
    fs::create_directories(pred);
    eit::save_class_map(eit::ClassMap(256), truth / "class_map", 0.115);
    eit::save_class_map(eit::ClassMap(128), pred / "class_map", 0.115);
    CHECK(run("score --pred " + (kWorkDir / "score_pred").string() + " --truth " +
              (kWorkDir / "score_truth").string()) == 2);

    CHECK(run("score --pred " + path("nonexistent") + " --truth " +
              (kWorkDir / "score_truth").string()) == 2);
}
