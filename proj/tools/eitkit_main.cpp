// eitkit: batch CLI for the EIT forward/reconstruction/scoring pipeline.
//
// Subcommands: mesh, forward, jacobian, reconstruct, segment,
// simulate-dataset, score. Every randomized command is deterministic given
// --seed; data goes to files, logs to stderr. Exit codes: 0 success,
// 1 runtime/numerical failure, 2 configuration/validation failure.

#include <CLI11.hpp>

#include <iostream>

#include "eitkit/eval.hpp"
#include "eitkit/recon.hpp"

using namespace eit;

namespace {

// inputs that do not exist are configuration errors (exit 2), not I/O
// failures; parse errors of existing files stay exit 1
void require_input(const std::string& path, const char* what) {
    if (!std::filesystem::exists(path)) {
        throw ConfigError(std::string(what) + " not found: " + path);
    }
}

struct MeshArgs {
    DiskMeshSpec spec;
    std::string out;
};

void cmd_mesh(const MeshArgs& args) {
    const TriMesh mesh = build_disk_mesh(args.spec);
    save_mesh(mesh, args.out);
    std::cerr << "mesh: " << mesh.n_vertices() << " vertices, " << mesh.n_elements()
              << " elements -> " << args.out << "\n";
}

struct ForwardArgs {
    std::string mesh_path;
    double sigma_const = kDefaultBackgroundConductivity;
    std::string phantom_img;
    double z = kDefaultContactImpedance;
    double amplitude = kDefaultInjectionCurrent;
    int level = 1;
    bool no_potentials = false;
    std::string out;
};

void cmd_forward(const ForwardArgs& args) {
    require_input(args.mesh_path, "mesh file");
    const TriMesh mesh = load_mesh(args.mesh_path);
    Conductivity sigma;
    if (args.phantom_img.empty()) {
        sigma = Conductivity::homogeneous(mesh.n_elements(), args.sigma_const);
    } else {
        sigma.values = pixel_to_mesh(load_grid(args.phantom_img), mesh);
        sigma.validate();
    }
    const auto z = ContactImpedances::uniform(mesh.n_electrodes(), args.z);
    const auto patterns = make_challenge_patterns(mesh.n_electrodes(), args.amplitude, args.level);
    const auto frame = solve_forward(assemble_system(mesh, sigma, z), patterns);
    const auto cfg = level_config(args.level, mesh.n_electrodes());
    const auto m = apply_measurement_operator(frame, cfg);
    save_measurement(m, patterns, args.out,
                     args.no_potentials ? nullptr : &frame.electrode_potentials);
    std::cerr << "forward: level " << args.level << ", " << m.values.size() << " measurements -> "
              << args.out << "\n";
}

struct JacobianArgs {
    std::string mesh_path;
    double sigma_const = kDefaultBackgroundConductivity;
    double z = kDefaultContactImpedance;
    double amplitude = kDefaultInjectionCurrent;
    int level = 1;
    std::string out;
};

void cmd_jacobian(const JacobianArgs& args) {
    require_input(args.mesh_path, "mesh file");
    const TriMesh mesh = load_mesh(args.mesh_path);
    const auto sigma = Conductivity::homogeneous(mesh.n_elements(), args.sigma_const);
    const auto z = ContactImpedances::uniform(mesh.n_electrodes(), args.z);
    const auto patterns = make_challenge_patterns(mesh.n_electrodes(), args.amplitude, 1);
    const auto jac = compute_jacobian_fast(mesh, sigma, z, patterns);
    const auto reduced = reduce_jacobian(jac, level_config(args.level, mesh.n_electrodes()));
    save_jacobian_cache(reduced, args.out);
    std::cerr << "jacobian: " << reduced.matrix.rows() << " x " << reduced.matrix.cols()
              << " at level " << args.level << " -> " << args.out << "\n";
}

struct ReconstructArgs {
    std::string mesh_path;
    std::string jacobian_path;
    std::string delta_u_path;
    std::string u_ref_path;
    std::string weights_path;
    std::string member = "fsm+sm+lm-weak";
    bool ensemble = false;
    int level = 1;
    double sm_jitter = 1e-10 * kDefaultSmKernelAmplitude;
    double alpha_fsm = -1.0;
    double alpha_sm = -1.0;
    double alpha_lm = -1.0;
    std::string out;
};

void cmd_reconstruct(const ReconstructArgs& args) {
    require_input(args.mesh_path, "mesh file");
    require_input(args.jacobian_path, "jacobian cache");
    require_input(args.delta_u_path, "delta-u file");
    require_input(args.u_ref_path, "u-ref file");
    if (!args.weights_path.empty()) require_input(args.weights_path, "weights config");
    const TriMesh mesh = load_mesh(args.mesh_path);
    const auto jac = load_jacobian_cache(args.jacobian_path, mesh_hash(mesh));
    if (jac.level != args.level) {
        throw ConfigError("jacobian cache was reduced at level " + std::to_string(jac.level) +
                          ", requested level " + std::to_string(args.level));
    }
    const auto u_ref = load_measurement(args.u_ref_path);
    if (u_ref.level != args.level) {
        throw ConfigError("u_ref is at level " + std::to_string(u_ref.level) +
                          ", requested level " + std::to_string(args.level));
    }
    auto delta_u = load_measurement(args.delta_u_path);
    if (delta_u.level != args.level) {
        throw ConfigError("delta_u is at level " + std::to_string(delta_u.level) +
                          ", requested level " + std::to_string(args.level));
    }
    const auto noise = build_noise_model(u_ref);

    PriorSet priors;
    priors.fsm = build_fsm(mesh);
    priors.sm = build_sm(mesh, kDefaultSmKernelAmplitude, kDefaultSmKernelLength, args.sm_jitter);
    priors.lm = build_lm(jac, noise);

    const WeightsConfig config = args.weights_path.empty() ? default_weights_config()
                                                           : load_weights_config(args.weights_path);
    const auto it = config.find(args.level);
    if (it == config.end()) {
        throw ConfigError("weights config has no entry for level " + std::to_string(args.level));
    }

    const MeshToPixel interp(mesh);
    const bool custom = args.alpha_fsm >= 0 || args.alpha_sm >= 0 || args.alpha_lm >= 0;

    auto write_one = [&](const Reconstructor& rec, const std::string& stem) {
        const PixelGrid img = interp.apply(rec.reconstruct(delta_u));
        save_grid(img, stem, mesh.radius);
        std::cerr << "reconstruct: '" << rec.weights().label << "' -> " << stem << ".bin\n";
    };

    if (custom) {
        RegWeights w;
        w.alpha_fsm = std::max(args.alpha_fsm, 0.0);
        w.alpha_sm = std::max(args.alpha_sm, 0.0);
        w.alpha_lm = std::max(args.alpha_lm, 0.0);
        w.label = "custom";
        write_one(Reconstructor(jac, noise, priors, w), args.out);
        return;
    }
    if (args.ensemble) {
        const auto ensemble = build_ensemble(jac, noise, priors, it->second);
        for (const auto& member : ensemble.members) {
            std::string label = member.weights().label;
            for (auto& ch : label) {
                if (ch == '+') ch = '_';
            }
            write_one(member, args.out + "_" + label);
        }
        return;
    }
    for (const auto& w : it->second) {
        if (w.label == args.member) {
            write_one(Reconstructor(jac, noise, priors, w), args.out);
            return;
        }
    }
    throw ConfigError("no ensemble member labeled '" + args.member + "' at level " +
                      std::to_string(args.level));
}

struct SegmentArgs {
    std::string input;
    double t_low = 0.0;
    double t_high = 0.0;
    bool otsu = false;
    std::string format = "binary";
    std::string out;
};

void cmd_segment(const SegmentArgs& args) {
    require_input(args.input + ".json", "grid sidecar");
    const PixelGrid img = load_grid(args.input);
    double t_low = args.t_low, t_high = args.t_high;
    if (args.otsu) {
        std::tie(t_low, t_high) = otsu_thresholds(img);
    } else if (!(t_low < 0.0) || !(t_high > 0.0)) {
        throw ConfigError("segment: pass --otsu or thresholds with --t-low < 0 < --t-high");
    }
    const ClassMap map = segment(img, t_low, t_high);
    const double radius = grid_disk_radius(args.input);
    if (args.format == "json") {
        save_class_map_json(map, args.out + ".json", radius);
    } else {
        save_class_map(map, args.out, radius);
    }
    std::cerr << "segment: thresholds (" << t_low << ", " << t_high << ") -> " << args.out << "\n";
}

struct DatasetArgs {
    std::string mesh_path;
    std::string out_dir;
    std::string n_per_level = "1";
    std::uint64_t seed = 0;
    int threads = 1;
    double z = kDefaultContactImpedance;
    double amplitude = kDefaultInjectionCurrent;
    double noise_scale = 1.0;
    double sigma_bg = kDefaultBackgroundConductivity;
    int min_objects = 1;
    int max_objects = 4;
    double min_size = 0.15;
    double max_size = 0.35;
};

void cmd_simulate_dataset(const DatasetArgs& args) {
    require_input(args.mesh_path, "mesh file");
    const TriMesh mesh = load_mesh(args.mesh_path);

    DatasetConfig config;
    config.master_seed = args.seed;
    config.threads = args.threads;
    config.contact_impedance = args.z;
    config.injection_current = args.amplitude;
    config.noise_scale = args.noise_scale;
    config.phantom.sigma_bg = args.sigma_bg;
    config.phantom.min_objects = args.min_objects;
    config.phantom.max_objects = args.max_objects;
    config.phantom.min_size = args.min_size;
    config.phantom.max_size = args.max_size;

    // scalar count for every level, or a 7-entry comma list
    std::vector<int> counts;
    std::stringstream ss(args.n_per_level);
    std::string token;
    while (std::getline(ss, token, ',')) {
        try {
            counts.push_back(std::stoi(token));
        } catch (...) {
            throw ConfigError("--n-per-level: cannot parse '" + token + "'");
        }
    }
    if (counts.size() == 1) {
        config.n_per_level.fill(counts[0]);
    } else if (counts.size() == kNumLevels) {
        std::copy(counts.begin(), counts.end(), config.n_per_level.begin());
    } else {
        throw ConfigError("--n-per-level takes one count or a comma list of exactly 7");
    }
    for (int c : config.n_per_level) {
        if (c < 0) throw ConfigError("--n-per-level: counts must be >= 0");
    }

    const auto manifest = generate_dataset(config, mesh, args.out_dir);
    int complete = 0, failed = 0;
    for (int v : manifest["counts"]["complete"]) complete += v;
    for (int v : manifest["counts"]["failed"]) failed += v;
    std::cerr << "simulate-dataset: " << complete << " samples complete, " << failed
              << " failed -> " << args.out_dir << "\n";
    if (failed > 0) {
        throw NumericalError(std::to_string(failed) + " samples failed; see manifest.json");
    }
}

struct ScoreArgs {
    std::string pred_dir;
    std::string truth_dir;
    std::string out;
    bool table = false;
    bool uniform_window = false;
};

void cmd_score(const ScoreArgs& args) {
    require_input(args.pred_dir, "prediction directory");
    require_input(args.truth_dir, "truth directory");
    SsimParams params;
    params.gaussian = !args.uniform_window;
    const ScoreReport report = score_run(args.pred_dir, args.truth_dir, params);
    if (!args.out.empty()) write_report_json(report, args.out);
    if (args.table || args.out.empty()) {
        std::cout << format_report_table(report);
    }
    std::cerr << "score: " << report.samples.size() << " samples, overall " << report.overall
              << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EIT dataset factory and reconstruction pipeline"};
    app.require_subcommand(1);
    // keep -h free for mesh sizes; help is --help everywhere
    app.set_help_flag("--help", "print help and exit");

    MeshArgs mesh_args;
    auto* mesh_cmd = app.add_subcommand("mesh", "build a uniform disk mesh with electrode arcs");
    mesh_cmd->set_help_flag("--help", "print help and exit");
    mesh_cmd->add_option("--radius", mesh_args.spec.radius, "tank radius [m]")
        ->capture_default_str();
    mesh_cmd->add_option("--h", mesh_args.spec.mesh_size_h, "target mesh size [m]")
        ->capture_default_str();
    mesh_cmd->add_option("--electrodes", mesh_args.spec.n_electrodes, "electrode count")
        ->capture_default_str();
    mesh_cmd->add_option("--coverage", mesh_args.spec.electrode_coverage,
                         "electrode arc fraction of pitch")
        ->capture_default_str();
    mesh_cmd->add_option("-o,--output", mesh_args.out, "output mesh JSON")->required();

    ForwardArgs fwd_args;
    auto* fwd_cmd = app.add_subcommand("forward", "solve the forward model for all patterns");
    fwd_cmd->set_help_flag("--help", "print help and exit");
    fwd_cmd->add_option("--mesh", fwd_args.mesh_path, "mesh JSON")->required();
    fwd_cmd->add_option("--sigma-const", fwd_args.sigma_const,
                        "homogeneous conductivity [1/Ohm]")
        ->capture_default_str();
    fwd_cmd->add_option("--phantom-img", fwd_args.phantom_img,
                        "conductivity image stem (overrides --sigma-const)");
    fwd_cmd->add_option("--z", fwd_args.z, "contact impedance [Ohm]")->capture_default_str();
    fwd_cmd->add_option("--amplitude", fwd_args.amplitude, "injection current [A]")
        ->capture_default_str();
    fwd_cmd->add_option("--level", fwd_args.level, "challenge level 1..7")->capture_default_str();
    fwd_cmd->add_flag("--no-potentials", fwd_args.no_potentials,
                      "omit electrode potentials from the output");
    fwd_cmd->add_option("-o,--output", fwd_args.out, "output measurement JSON")->required();

    JacobianArgs jac_args;
    auto* jac_cmd = app.add_subcommand("jacobian", "build the measurement Jacobian cache");
    jac_cmd->set_help_flag("--help", "print help and exit");
    jac_cmd->add_option("--mesh", jac_args.mesh_path, "mesh JSON")->required();
    jac_cmd->add_option("--sigma-const", jac_args.sigma_const, "expansion point [1/Ohm]")
        ->capture_default_str();
    jac_cmd->add_option("--z", jac_args.z, "contact impedance [Ohm]")->capture_default_str();
    jac_cmd->add_option("--amplitude", jac_args.amplitude, "injection current [A]")
        ->capture_default_str();
    jac_cmd->add_option("--level", jac_args.level, "challenge level 1..7")->capture_default_str();
    jac_cmd->add_option("-o,--output", jac_args.out, "output cache file")->required();

    ReconstructArgs rec_args;
    auto* rec_cmd = app.add_subcommand("reconstruct", "one-step linearized reconstruction");
    rec_cmd->set_help_flag("--help", "print help and exit");
    rec_cmd->add_option("--mesh", rec_args.mesh_path, "mesh JSON")->required();
    rec_cmd->add_option("--jacobian", rec_args.jacobian_path, "jacobian cache")->required();
    rec_cmd->add_option("--delta-u", rec_args.delta_u_path, "measurement perturbation JSON")
        ->required();
    rec_cmd->add_option("--u-ref", rec_args.u_ref_path, "reference measurement JSON")->required();
    rec_cmd->add_option("--level", rec_args.level, "challenge level 1..7")->capture_default_str();
    rec_cmd->add_option("--weights", rec_args.weights_path, "weights config JSON");
    rec_cmd->add_option("--member", rec_args.member, "ensemble member label")
        ->capture_default_str();
    rec_cmd->add_flag("--ensemble", rec_args.ensemble, "write all five ensemble members");
    rec_cmd->add_option("--alpha-fsm", rec_args.alpha_fsm, "custom FSM strength");
    rec_cmd->add_option("--alpha-sm", rec_args.alpha_sm, "custom SM strength");
    rec_cmd->add_option("--alpha-lm", rec_args.alpha_lm, "custom LM strength");
    rec_cmd->add_option("--sm-jitter", rec_args.sm_jitter, "SM kernel diagonal jitter")
        ->capture_default_str();
    rec_cmd->add_option("-o,--output", rec_args.out, "output grid stem")->required();

    SegmentArgs seg_args;
    auto* seg_cmd = app.add_subcommand("segment", "threshold a reconstruction into classes");
    seg_cmd->set_help_flag("--help", "print help and exit");
    seg_cmd->add_option("--input", seg_args.input, "reconstruction grid stem")->required();
    seg_cmd->add_option("--t-low", seg_args.t_low, "resistive threshold (< 0)");
    seg_cmd->add_option("--t-high", seg_args.t_high, "conductive threshold (> 0)");
    seg_cmd->add_flag("--otsu", seg_args.otsu, "pick thresholds by two-sided Otsu");
    seg_cmd->add_option("--format", seg_args.format, "binary|json")
        ->check(CLI::IsMember({"binary", "json"}))
        ->capture_default_str();
    seg_cmd->add_option("-o,--output", seg_args.out, "output class map stem")->required();

    DatasetArgs ds_args;
    auto* ds_cmd = app.add_subcommand("simulate-dataset", "batch phantom/measurement factory");
    ds_cmd->set_help_flag("--help", "print help and exit");
    ds_cmd->add_option("--mesh", ds_args.mesh_path, "mesh JSON")->required();
    ds_cmd->add_option("--out", ds_args.out_dir, "output dataset directory")->required();
    ds_cmd->add_option("--n-per-level", ds_args.n_per_level,
                       "samples per level (scalar or 7 comma-separated)")
        ->capture_default_str();
    ds_cmd->add_option("--seed", ds_args.seed, "master seed")->capture_default_str();
    ds_cmd->add_option("--threads", ds_args.threads, "worker thread cap")->capture_default_str();
    ds_cmd->add_option("--z", ds_args.z, "contact impedance [Ohm]")->capture_default_str();
    ds_cmd->add_option("--amplitude", ds_args.amplitude, "injection current [A]")
        ->capture_default_str();
    ds_cmd->add_option("--noise-scale", ds_args.noise_scale, "noise std multiplier (0 = off)")
        ->capture_default_str();
    ds_cmd->add_option("--sigma-bg", ds_args.sigma_bg, "background conductivity [1/Ohm]")
        ->capture_default_str();
    ds_cmd->add_option("--min-objects", ds_args.min_objects, "min objects per phantom")
        ->capture_default_str();
    ds_cmd->add_option("--max-objects", ds_args.max_objects, "max objects per phantom")
        ->capture_default_str();
    ds_cmd->add_option("--min-size", ds_args.min_size, "min object size (fraction of radius)")
        ->capture_default_str();
    ds_cmd->add_option("--max-size", ds_args.max_size, "max object size (fraction of radius)")
        ->capture_default_str();

    ScoreArgs score_args;
    auto* score_cmd = app.add_subcommand("score", "SSIM-score predictions against ground truth");
    score_cmd->set_help_flag("--help", "print help and exit");
    score_cmd->add_option("--pred", score_args.pred_dir, "prediction directory")->required();
    score_cmd->add_option("--truth", score_args.truth_dir, "ground truth directory")->required();
    score_cmd->add_option("-o,--output", score_args.out, "report JSON path");
    score_cmd->add_flag("--table", score_args.table, "print the per-level table");
    score_cmd->add_flag("--uniform-window", score_args.uniform_window,
                        "use a uniform SSIM window instead of gaussian");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(mesh_cmd)) cmd_mesh(mesh_args);
        if (app.got_subcommand(fwd_cmd)) cmd_forward(fwd_args);
        if (app.got_subcommand(jac_cmd)) cmd_jacobian(jac_args);
        if (app.got_subcommand(rec_cmd)) cmd_reconstruct(rec_args);
        if (app.got_subcommand(seg_cmd)) cmd_segment(seg_args);
        if (app.got_subcommand(ds_cmd)) cmd_simulate_dataset(ds_args);
        if (app.got_subcommand(score_cmd)) cmd_score(score_args);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
