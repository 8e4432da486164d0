// meshsim: batch front end for compiling, simulating and characterizing
// MZI meshes.
//
// Exit codes: 0 ok, 2 bad input, 3 validation failure, 4 numerical failure.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshsim/io.hpp"
#include "meshsim/meshsim.hpp"

namespace fs = std::filesystem;
using meshsim::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitValidation = 3;
constexpr int kExitNumerical = 4;

#ifndef MESHSIM_VERSION
#define MESHSIM_VERSION "dev"
#endif

/// Failure with an explicit exit code.
struct ExitError : std::runtime_error {
    int code;
    ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
};

/// Files produced by one command, written only after everything succeeded.
struct Outputs {
    std::map<std::string, std::string> files;
    std::vector<std::string> inputs;
    json parameters = json::object();
    std::optional<std::uint64_t> seed;
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("MESHSIM_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw ExitError(kExitInput, std::string("MESHSIM_SEED is not an integer: ") + env);
        }
    }
    return 0;
}

meshsim::ImperfectionModel load_imperfections(const std::string& path, const meshsim::MeshSpec& spec) {
    if (path.empty()) return {};
    return meshsim::io::imperfections_from_json(meshsim::io::read_json(path), spec);
}

void write_outputs(const fs::path& dir, const Outputs& out, const std::string& command,
                   const std::vector<std::string>& argv) {
    json manifest{{"command", command},
                  {"argv", argv},
                  {"inputs", out.inputs},
                  {"parameters", out.parameters},
                  {"output_dir", dir.string()},
                  {"tool_version", MESHSIM_VERSION}};
    manifest["seed"] = out.seed ? json(*out.seed) : json(nullptr);
    for (const auto& [name, content] : out.files) meshsim::io::write_atomic(dir / name, content);
    meshsim::io::write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ------------------------------------------------------------------ commands

Outputs cmd_decompose(const std::string& input, double ingest_tol) {
    Outputs out;
    out.inputs.push_back(input);
    out.parameters["ingest_tol"] = ingest_tol;
    const meshsim::ComplexMatrix m = meshsim::io::matrix_from_json(meshsim::io::read_json(input));
    if (!m.is_square()) throw ExitError(kExitInput, "matrix must be square");
    const double defect = meshsim::unitarity_defect(m);
    if (defect > ingest_tol) {
        const Eigen::MatrixXd dev =
            (m.eigen().adjoint() * m.eigen() - meshsim::MatrixXc::Identity(m.rows(), m.cols())).cwiseAbs();
        Eigen::Index j = 0;
        Eigen::Index k = 0;
        dev.maxCoeff(&j, &k);
        throw ExitError(kExitValidation, "matrix is not unitary: worst deviation |(U^dagger U - I)(" +
                                             std::to_string(j) + "," + std::to_string(k) +
                                             ")| = " + meshsim::io::fmt_double(defect));
    }
    // Inputs within the ingest tolerance are projected onto the unitary group.
    const meshsim::UnitaryMatrix u =
        defect <= meshsim::kUnitaryTol ? meshsim::UnitaryMatrix(m) : meshsim::nearest_unitary(m);
    const meshsim::CompileResult r = meshsim::decompose(u);
    out.files["phases.json"] = meshsim::io::compile_result_to_json(r).dump(2) + "\n";
    std::cout << "residual " << meshsim::io::fmt_double(r.residual) << "\n";
    std::cout << "global_phase " << meshsim::io::fmt_double(r.global_phase) << "\n";
    return out;
}

Outputs cmd_simulate(const std::string& phases, const std::string& imperfections, std::optional<std::uint64_t> noise_seed) {
    Outputs out;
    out.inputs.push_back(phases);
    if (!imperfections.empty()) out.inputs.push_back(imperfections);
    out.seed = noise_seed;
    const meshsim::PhaseConfig config = meshsim::io::config_from_json(meshsim::io::read_json(phases));
    const meshsim::MeshSpec spec = meshsim::mesh_layout(config.n_modes);
    const meshsim::ImperfectionModel imp = load_imperfections(imperfections, spec);
    const meshsim::ScatteringMatrix s = meshsim::forward(spec, config, imp, noise_seed);
    json sj = meshsim::io::matrix_to_json(s.matrix.eigen());
    sj["lossy"] = s.lossy;
    out.files["smatrix.json"] = sj.dump(2) + "\n";
    out.files["intensity.csv"] = meshsim::io::intensity_csv(s.matrix.eigen().cwiseAbs2());
    if (!s.lossy && !meshsim::is_unitary(s.matrix, meshsim::kUnitaryTol)) {
        std::cerr << "warning: lossless simulation is not unitary at 1e-10\n";
    }
    const Eigen::RowVectorXd col_power = s.matrix.eigen().cwiseAbs2().colwise().sum();
    std::cout << "column power min " << meshsim::io::fmt_double(col_power.minCoeff()) << " max "
              << meshsim::io::fmt_double(col_power.maxCoeff()) << "\n";
    return out;
}

Outputs cmd_synth_fringe(const std::string& model_path, double v_max, std::size_t samples, double noise,
                         std::uint64_t seed) {
    Outputs out;
    out.inputs.push_back(model_path);
    out.seed = seed;
    const meshsim::HeaterModel model = meshsim::io::heater_from_json(meshsim::io::read_json(model_path));
    if (v_max <= 0.0) v_max = 2.0 * std::sqrt(2.0) * model.v_pi;
    out.parameters = {{"v_max", v_max}, {"samples", samples}, {"noise", noise}};
    const auto curve = meshsim::synthesize_fringe(model, v_max, samples, noise, seed);
    out.files["curve.csv"] = meshsim::io::curve_to_csv(curve);
    return out;
}

Outputs cmd_calibrate(const std::string& curve_path) {
    Outputs out;
    out.inputs.push_back(curve_path);
    const auto curve = meshsim::io::curve_from_csv(meshsim::io::read_file(curve_path));
    const meshsim::FitResult fit = meshsim::fit_fringe(curve);
    out.files["fit.json"] = meshsim::io::fit_to_json(fit).dump(2) + "\n";
    std::cout << "v_pi " << meshsim::io::fmt_double(fit.model.v_pi) << " V, rms "
              << meshsim::io::fmt_double(fit.rms_residual) << "\n";
    return out;
}

Outputs cmd_hom(std::optional<int> cell, bool all, int modes, const std::string& source_path,
                const std::string& imperfections, std::optional<std::uint64_t> noise_seed) {
    Outputs out;
    if (!source_path.empty()) out.inputs.push_back(source_path);
    if (!imperfections.empty()) out.inputs.push_back(imperfections);
    out.seed = noise_seed;
    out.parameters = {{"modes", modes}, {"all", all}};
    if (cell) out.parameters["cell"] = *cell;

    const meshsim::MeshSpec spec = meshsim::mesh_layout(modes);
    const meshsim::SourceModel source =
        source_path.empty() ? meshsim::SourceModel{} : meshsim::io::source_from_json(meshsim::io::read_json(source_path));
    const meshsim::ImperfectionModel imp = load_imperfections(imperfections, spec);

    std::vector<int> cells;
    if (all) {
        for (const auto& c : spec.cells) cells.push_back(c.cell_id);
    } else {
        if (*cell < 0 || static_cast<std::size_t>(*cell) >= spec.cell_count()) {
            throw ExitError(kExitInput, "cell " + std::to_string(*cell) + " not in the " + std::to_string(modes) + "-mode mesh");
        }
        cells.push_back(*cell);
    }
    const auto grid = meshsim::default_delay_grid(source);
    std::vector<meshsim::HomCurve> curves;
    for (int id : cells) {
        curves.push_back(meshsim::hom_scan(spec, id, source, grid, imp, noise_seed));
        out.files["hom_cell_" + std::to_string(id) + ".csv"] = meshsim::io::hom_curve_to_csv(curves.back());
    }
    const auto stats = meshsim::average_visibility(curves);
    out.files["homcurves.csv"] = meshsim::io::hom_curves_to_csv(curves);
    out.files["visibility.json"] = meshsim::io::visibility_to_json(stats).dump(2) + "\n";
    std::cout << "average visibility " << meshsim::io::fmt_double(stats.average) << ", outliers "
              << stats.outliers.size() << "\n";
    return out;
}

Outputs cmd_report(const std::string& family, std::size_t samples, std::optional<double> noise, int dim,
                   const std::string& imperfections, std::uint64_t seed) {
    Outputs out;
    if (!imperfections.empty()) out.inputs.push_back(imperfections);
    out.seed = seed;
    const meshsim::MeshSpec spec = meshsim::mesh_layout(dim);
    meshsim::ImperfectionModel imp = load_imperfections(imperfections, spec);
    if (noise) imp.phase_noise_sigma = *noise;
    out.parameters = {{"family", family}, {"samples", samples}, {"noise", imp.phase_noise_sigma}, {"dim", dim}};
    const auto report = meshsim::fidelity_report(meshsim::parse_family(family), samples, imp, seed, dim);
    out.files["report.json"] = meshsim::io::report_to_json(report).dump(2) + "\n";
    std::cout << family << " fidelity " << meshsim::io::fmt_double(report.mean) << " +- "
              << meshsim::io::fmt_double(report.stddev) << " (" << samples << " samples)\n";
    return out;
}

Outputs cmd_haar(int dim, std::uint64_t seed) {
    Outputs out;
    out.seed = seed;
    out.parameters = {{"dim", dim}};
    const auto u = meshsim::haar_random_unitary(dim, seed);
    out.files["matrix.json"] = meshsim::io::matrix_to_json(u.eigen()).dump(2) + "\n";
    return out;
}

Outputs cmd_target(const std::string& family, int dim, int power, std::vector<int> modes, std::string letter,
                   const std::string& mask_path, std::uint64_t seed, std::size_t index) {
    Outputs out;
    out.seed = seed;
    out.parameters = {{"family", family}, {"dim", dim}};
    std::optional<meshsim::UnitaryMatrix> u;
    if (family == "pauli_x") {
        out.parameters["power"] = power;
        u = meshsim::pauli_x_power(dim, power);
    } else if (family == "switching" && modes.size() == 2) {
        out.parameters["modes"] = modes;
        u = meshsim::switching_matrix(dim, modes[0], modes[1]);
    } else if (family == "mask" && (!letter.empty() || !mask_path.empty())) {
        Eigen::MatrixXd mask;
        if (!mask_path.empty()) {
            out.inputs.push_back(mask_path);
            mask = meshsim::io::mask_from_csv(meshsim::io::read_file(mask_path));
        } else {
            out.parameters["letter"] = letter;
            mask = meshsim::letter_mask(letter.at(0));
        }
        const auto result = meshsim::intensity_mask_unitary(mask);
        out.parameters["achieved_error"] = result.achieved_error;
        std::cout << "mask mismatch " << meshsim::io::fmt_double(result.achieved_error) << "\n";
        u = result.unitary;
    } else {
        out.parameters["index"] = index;
        u = meshsim::family_target(meshsim::parse_family(family), dim, seed, index);
    }
    out.files["matrix.json"] = meshsim::io::matrix_to_json(u->eigen()).dump(2) + "\n";
    return out;
}

// ------------------------------------------------------------------ driver

int run(std::vector<std::string> argv);

int run_guarded(const std::vector<std::string>& argv, const std::function<Outputs()>& body, const std::string& command,
                const std::string& out_dir) {
    Outputs out = body();
    write_outputs(out_dir, out, command, argv);
    return kExitOk;
}

int run(std::vector<std::string> argv) {
    CLI::App app{"meshsim: compile, simulate and characterize MZI-mesh photonic processors"};
    app.require_subcommand(1);
    app.set_version_flag("--version", MESHSIM_VERSION);

    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_opt;
    auto add_common = [&](CLI::App* sub, bool with_seed) {
        sub->add_option("-o,--out", out_dir, "output directory");
        if (with_seed) sub->add_option("--seed", seed_opt, "random seed (default: $MESHSIM_SEED or 0)");
    };

    std::string input, imperfections, source, family = "haar", letter, mask_path, manifest_path;
    double ingest_tol = 1e-8, v_max = 0.0, fringe_noise = 0.0;
    std::optional<double> phase_noise;
    std::optional<std::uint64_t> noise_seed;
    std::size_t samples = 50, report_samples = 100, index = 0;
    int dim = 12, power = 1;
    std::optional<int> cell;
    bool all = false;
    std::vector<int> modes;

    auto* dec = app.add_subcommand("decompose", "compile a unitary (matrix JSON) into mesh phases");
    dec->add_option("matrix", input, "matrix JSON")->required();
    dec->add_option("--tol", ingest_tol, "unitarity tolerance for the input");
    add_common(dec, false);

    auto* sim = app.add_subcommand("simulate", "scattering matrix of a phase program");
    sim->add_option("phases", input, "phase config JSON")->required();
    sim->add_option("-i,--imperfections", imperfections, "imperfection model JSON");
    sim->add_option("--noise-seed", noise_seed, "sample phase noise with this seed");
    add_common(sim, false);

    auto* synth = app.add_subcommand("synth-fringe", "synthesize a heater calibration sweep");
    synth->add_option("model", input, "heater model JSON")->required();
    synth->add_option("--vmax", v_max, "sweep end voltage (default 2 sqrt(2) v_pi)");
    synth->add_option("--samples", samples, "number of samples");
    synth->add_option("--noise", fringe_noise, "Gaussian noise sigma on transmissions");
    add_common(synth, true);

    auto* cal = app.add_subcommand("calibrate", "fit a heater calibration sweep (CSV)");
    cal->add_option("curve", input, "calibration CSV")->required();
    add_common(cal, false);

    auto* hom = app.add_subcommand("hom", "Hong-Ou-Mandel scans through routed cells");
    auto* cell_opt = hom->add_option("--cell", cell, "single cell id");
    auto* all_opt = hom->add_flag("--all", all, "scan every cell");
    cell_opt->excludes(all_opt);
    hom->add_option("--source", source, "source model JSON");
    hom->add_option("-i,--imperfections", imperfections, "imperfection model JSON");
    hom->add_option("--modes", dim, "mesh size");
    hom->add_option("--noise-seed", noise_seed, "sample phase noise with this seed");
    add_common(hom, false);

    auto* rep = app.add_subcommand("report", "fidelity statistics of a target family");
    rep->add_option("--family", family, "perm | pauli_x | switching | haar | mask");
    rep->add_option("--samples", report_samples, "number of targets");
    rep->add_option("--noise", phase_noise, "phase noise sigma in radians");
    rep->add_option("--dim", dim, "mesh size");
    rep->add_option("-i,--imperfections", imperfections, "imperfection model JSON");
    add_common(rep, true);

    auto* haar = app.add_subcommand("haar", "write a Haar-random unitary");
    haar->add_option("--dim", dim, "dimension");
    add_common(haar, true);

    auto* tgt = app.add_subcommand("target", "write a target unitary");
    tgt->add_option("--family", family, "perm | pauli_x | switching | haar | mask")->required();
    tgt->add_option("--dim", dim, "dimension");
    tgt->add_option("--power", power, "Pauli-X power");
    tgt->add_option("--modes", modes, "two modes to switch")->expected(2);
    tgt->add_option("--letter", letter, "built-in mask letter (Q or X)");
    tgt->add_option("--mask", mask_path, "0/1 mask CSV");
    tgt->add_option("--index", index, "sample index for seeded families");
    add_common(tgt, true);

    auto* rerun = app.add_subcommand("rerun", "repeat the run recorded in a manifest");
    rerun->add_option("manifest", manifest_path, "manifest.json")->required();
    rerun->add_option("-o,--out", out_dir, "output directory (default: the recorded one)");

    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (rerun->parsed()) {
            const json m = meshsim::io::read_json(manifest_path);
            auto args = meshsim::io::get_field<std::vector<std::string>>(m, "argv");
            args.push_back("--out");
            args.push_back(rerun->count("--out") > 0 ? out_dir
                                                     : meshsim::io::get_or<std::string>(m, "output_dir", "."));
            return run(args);
        }

        const std::uint64_t seed = seed_opt.value_or(default_seed());
        // Pin the resolved seed so a manifest replays without the environment.
        std::vector<std::string> recorded;
        for (std::size_t i = 0; i < argv.size(); ++i) {
            const std::string& a = argv[i];
            if (a == "-o" || a == "--out") {
                ++i;
                continue;
            }
            if (a.rfind("--out=", 0) == 0) continue;
            recorded.push_back(a);
        }
        if (!seed_opt && (synth->parsed() || rep->parsed() || haar->parsed() || tgt->parsed())) {
            recorded.push_back("--seed");
            recorded.push_back(std::to_string(seed));
        }

        std::string command;
        std::function<Outputs()> body;
        if (dec->parsed()) {
            command = "decompose";
            body = [&] { return cmd_decompose(input, ingest_tol); };
        } else if (sim->parsed()) {
            command = "simulate";
            body = [&] { return cmd_simulate(input, imperfections, noise_seed); };
        } else if (synth->parsed()) {
            command = "synth-fringe";
            body = [&] { return cmd_synth_fringe(input, v_max, samples, fringe_noise, seed); };
        } else if (cal->parsed()) {
            command = "calibrate";
            body = [&] { return cmd_calibrate(input); };
        } else if (hom->parsed()) {
            command = "hom";
            if (!all && !cell) throw ExitError(kExitInput, "hom needs --cell N or --all");
            body = [&] { return cmd_hom(cell, all, dim, source, imperfections, noise_seed); };
        } else if (rep->parsed()) {
            command = "report";
            body = [&] { return cmd_report(family, report_samples, phase_noise, dim, imperfections, seed); };
        } else if (haar->parsed()) {
            command = "haar";
            body = [&] { return cmd_haar(dim, seed); };
        } else {
            command = "target";
            body = [&] { return cmd_target(family, dim, power, modes, letter, mask_path, seed, index); };
        }
        return run_guarded(recorded, body, command, out_dir);
    } catch (const ExitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code;
    } catch (const meshsim::FitError& e) {
        std::cerr << "fit failed: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const meshsim::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const meshsim::PreconditionError& e) {
        std::cerr << "validation failed: " << e.what() << "\n";
        return kExitValidation;
    } catch (const meshsim::Error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitInput;
    }
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(std::move(args));
}
