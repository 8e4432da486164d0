#pragma once

// File formats shared by the library and the command-line tool: JSON via
// nlohmann/json, CSV by hand. Parse failures throw ParseError.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "meshsim/calibration.hpp"
#include "meshsim/compiler.hpp"
#include "meshsim/errors.hpp"
#include "meshsim/matrix.hpp"
#include "meshsim/mesh.hpp"
#include "meshsim/quantum.hpp"
#include "meshsim/targets.hpp"

namespace meshsim::io {

using json = nlohmann::json;

// ---------------------------------------------------------------- helpers

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
}

inline json read_json(const std::filesystem::path& path) { return parse_json(read_file(path)); }

/// Write through a temporary file in the same directory and rename it into
/// place, so readers never observe a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string fmt_double(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream ss;
    ss << std::setprecision(17) << x;
    return ss.str();
}

template <typename T>
T get_field(const json& j, const char* key) {
    if (!j.contains(key)) throw ParseError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad field '") + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? get_field<T>(j, key) : fallback;
}

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline double parse_number(const std::string& s) {
    try {
        std::size_t used = 0;
        const double x = std::stod(s, &used);
        while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
        if (used != s.size()) throw ParseError("trailing characters in number '" + s + "'");
        return x;
    } catch (const std::logic_error&) {
        throw ParseError("not a number: '" + s + "'");
    }
}

// ---------------------------------------------------------------- matrices

/// {"rows": r, "cols": c, "entries": [[re, im], ...]} in row-major order.
inline json matrix_to_json(const MatrixXc& m) {
    json entries = json::array();
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) entries.push_back({m(j, k).real(), m(j, k).imag()});
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"entries", std::move(entries)}};
}

inline ComplexMatrix matrix_from_json(const json& j) {
    const auto rows = get_field<long long>(j, "rows");
    const auto cols = get_field<long long>(j, "cols");
    if (rows < 1 || cols < 1) throw ParseError("matrix dimensions must be positive");
    const json& entries = j.at("entries");
    if (!entries.is_array() || static_cast<long long>(entries.size()) != rows * cols) {
        throw ParseError("matrix needs rows*cols entries");
    }
    MatrixXc m(rows, cols);
    for (long long i = 0; i < rows * cols; ++i) {
        const json& e = entries[static_cast<std::size_t>(i)];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
            throw ParseError("matrix entry must be [re, im]");
        }
        m(i / cols, i % cols) = cplx(e[0].get<double>(), e[1].get<double>());
    }
    try {
        return ComplexMatrix(std::move(m));
    } catch (const Error& e) {
        throw ParseError(e.what());
    }
}

inline std::string intensity_csv(const Eigen::MatrixXd& m) {
    std::ostringstream out;
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) out << (k ? "," : "") << fmt_double(m(j, k));
        out << '\n';
    }
    return out.str();
}

/// 0/1 grid, one row per line.
inline Eigen::MatrixXd mask_from_csv(const std::string& text) {
    const auto rows = parse_csv(text);
    if (rows.empty()) throw ParseError("empty mask");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& r = rows[static_cast<std::size_t>(j)];
        if (static_cast<Eigen::Index>(r.size()) != n) throw ParseError("mask must be square");
        for (Eigen::Index k = 0; k < n; ++k) {
            const double x = parse_number(r[static_cast<std::size_t>(k)]);
            if (x != 0.0 && x != 1.0) throw ParseError("mask entries must be 0 or 1");
            m(j, k) = x;
        }
    }
    return m;
}

// ---------------------------------------------------------------- mesh

inline json config_to_json(const PhaseConfig& c) {
    const MeshSpec spec = mesh_layout(c.n_modes);
    json cells = json::array();
    for (const auto& site : spec.cells) {
        const auto id = static_cast<std::size_t>(site.cell_id);
        cells.push_back({{"id", site.cell_id},
                         {"layer", site.layer},
                         {"top_mode", site.top_mode},
                         {"theta", c.theta.at(id)},
                         {"phi", c.phi.at(id)}});
    }
    return json{{"n_modes", c.n_modes},
                {"cells", std::move(cells)},
                {"input_phases", c.input_phases},
                {"output_phases", c.output_phases}};
}

/// Cells may appear in any order; a listed layer/top_mode must agree with
/// the square layout.
inline PhaseConfig config_from_json(const json& j) {
    PhaseConfig c;
    c.n_modes = get_field<int>(j, "n_modes");
    if (c.n_modes < 2) throw ParseError("n_modes must be >= 2");
    const MeshSpec spec = mesh_layout(c.n_modes);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    c.theta.assign(spec.cell_count(), nan);
    c.phi.assign(spec.cell_count(), nan);
    if (!j.contains("cells") || !j.at("cells").is_array()) throw ParseError("missing 'cells' array");
    for (const json& cell : j.at("cells")) {
        const int id = get_field<int>(cell, "id");
        if (id < 0 || static_cast<std::size_t>(id) >= spec.cell_count()) {
            throw ParseError("cell id " + std::to_string(id) + " not in mesh");
        }
        const auto& site = spec.cells[static_cast<std::size_t>(id)];
        if (get_or<int>(cell, "layer", site.layer) != site.layer ||
            get_or<int>(cell, "top_mode", site.top_mode) != site.top_mode) {
            throw ParseError("cell " + std::to_string(id) + " position disagrees with the mesh layout");
        }
        c.theta[static_cast<std::size_t>(id)] = get_field<double>(cell, "theta");
        c.phi[static_cast<std::size_t>(id)] = get_field<double>(cell, "phi");
    }
    for (std::size_t i = 0; i < spec.cell_count(); ++i) {
        if (std::isnan(c.theta[i])) throw ConfigError("cell " + std::to_string(i) + " has no phases");
    }
    const std::vector<double> zeros(static_cast<std::size_t>(c.n_modes), 0.0);
    c.input_phases = get_or<std::vector<double>>(j, "input_phases", zeros);
    c.output_phases = get_or<std::vector<double>>(j, "output_phases", zeros);
    c.validate(spec);
    return c;
}

inline json compile_result_to_json(const CompileResult& r) {
    json j = config_to_json(r.config);
    j["residual"] = r.residual;
    j["global_phase"] = r.global_phase;
    return j;
}

/// Per-mode loss fields accept a list or a single number applied to every
/// mode; coupler_splitting likewise accepts a single ratio.
inline ImperfectionModel imperfections_from_json(const json& j, const MeshSpec& spec) {
    ImperfectionModel imp;
    auto per_item = [&](const char* key, std::size_t count) -> std::vector<double> {
        if (!j.contains(key)) return {};
        const json& v = j.at(key);
        if (v.is_number()) return std::vector<double>(count, v.get<double>());
        return get_field<std::vector<double>>(j, key);
    };
    const auto n = static_cast<std::size_t>(spec.n_modes);
    imp.coupler_splitting = per_item("coupler_splitting", spec.heater_count());
    imp.input_coupling_loss_db = per_item("input_coupling_loss_db", n);
    imp.output_coupling_loss_db = per_item("output_coupling_loss_db", n);
    imp.propagation_loss_db_per_layer = get_or<double>(j, "propagation_loss_db_per_layer", 0.0);
    imp.phase_noise_sigma = get_or<double>(j, "phase_noise_sigma", 0.0);
    if (j.contains("crosstalk")) {
        const auto rows = get_field<std::vector<std::vector<double>>>(j, "crosstalk");
        if (!rows.empty()) {
            imp.crosstalk.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != rows[0].size()) throw ParseError("crosstalk rows differ in length");
                for (std::size_t c = 0; c < rows[r].size(); ++c) {
                    imp.crosstalk(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
                }
            }
        }
    }
    try {
        imp.validate(spec);
    } catch (const Error& e) {
        throw ParseError(std::string("imperfection model: ") + e.what());
    }
    return imp;
}

inline json imperfections_to_json(const ImperfectionModel& imp) {
    json j{{"coupler_splitting", imp.coupler_splitting},
           {"input_coupling_loss_db", imp.input_coupling_loss_db},
           {"output_coupling_loss_db", imp.output_coupling_loss_db},
           {"propagation_loss_db_per_layer", imp.propagation_loss_db_per_layer},
           {"phase_noise_sigma", imp.phase_noise_sigma}};
    json xt = json::array();
    for (Eigen::Index r = 0; r < imp.crosstalk.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(imp.crosstalk.cols()));
        for (Eigen::Index c = 0; c < imp.crosstalk.cols(); ++c) row[static_cast<std::size_t>(c)] = imp.crosstalk(r, c);
        xt.push_back(row);
    }
    j["crosstalk"] = std::move(xt);
    return j;
}

// ---------------------------------------------------------------- calibration

inline json heater_to_json(const HeaterModel& m) {
    return json{{"v_pi", m.v_pi},
                {"theta_offset", m.theta_offset},
                {"contrast", m.contrast},
                {"background", m.background},
                {"heater_id", m.heater_id}};
}

inline HeaterModel heater_from_json(const json& j) {
    HeaterModel m;
    m.v_pi = get_field<double>(j, "v_pi");
    m.theta_offset = get_or<double>(j, "theta_offset", 0.0);
    m.contrast = get_or<double>(j, "contrast", 1.0);
    m.background = get_or<double>(j, "background", 0.0);
    m.heater_id = get_or<int>(j, "heater_id", 0);
    try {
        m.validate();
    } catch (const Error& e) {
        throw ParseError(std::string("heater model: ") + e.what());
    }
    return m;
}

inline json fit_to_json(const FitResult& f) {
    json j{{"model", heater_to_json(f.model)},
           {"rms_residual", f.rms_residual},
           {"covariance_diag",
            {{"v_pi", f.covariance_diag[0]},
             {"theta_offset", f.covariance_diag[1]},
             {"contrast", f.covariance_diag[2]},
             {"background", f.covariance_diag[3]}}}};
    const double er = extinction_ratio(f);
    j["extinction_ratio_db"] = std::isinf(er) ? json("inf") : json(er);
    return j;
}

/// Header "voltage,top,bottom"; the bottom column may be left empty.
inline std::string curve_to_csv(const CalibrationCurve& c) {
    std::ostringstream out;
    out << "voltage,top,bottom\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        out << fmt_double(c.voltages[i]) << ',' << fmt_double(c.top[i]) << ',';
        if (!c.bottom.empty()) out << fmt_double(c.bottom[i]);
        out << '\n';
    }
    return out.str();
}

inline CalibrationCurve curve_from_csv(const std::string& text) {
    const auto rows = parse_csv(text);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "voltage" || rows[0][1] != "top") {
        throw ParseError("calibration CSV must start with header 'voltage,top,bottom'");
    }
    CalibrationCurve c;
    bool has_bottom = rows[0].size() >= 3;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() < 2) throw ParseError("calibration row " + std::to_string(i) + " is short");
        c.voltages.push_back(parse_number(r[0]));
        c.top.push_back(parse_number(r[1]));
        if (has_bottom && r.size() >= 3 && !r[2].empty()) {
            c.bottom.push_back(parse_number(r[2]));
        } else {
            has_bottom = false;
        }
    }
    if (!has_bottom) c.bottom.clear();
    try {
        c.validate();
    } catch (const Error& e) {
        throw ParseError(std::string("calibration curve: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------- quantum

inline SourceModel source_from_json(const json& j) {
    SourceModel s;
    s.base_indistinguishability = get_or<double>(j, "base_indistinguishability", 1.0);
    s.coherence_time_sigma = get_or<double>(j, "coherence_time_sigma", s.coherence_time_sigma);
    s.pair_rate = get_or<double>(j, "pair_rate", 1.0);
    try {
        s.validate();
    } catch (const Error& e) {
        throw ParseError(std::string("source model: ") + e.what());
    }
    return s;
}

/// Header "delay_s,normalized_cc".
inline std::string hom_curve_to_csv(const HomCurve& c) {
    std::ostringstream out;
    out << "delay_s,normalized_cc\n";
    for (std::size_t i = 0; i < c.delays.size(); ++i) {
        out << fmt_double(c.delays[i]) << ',' << fmt_double(c.coincidence_rate[i]) << '\n';
    }
    return out.str();
}

inline HomCurve hom_curve_from_csv(const std::string& text, double plateau_delay, int cell_id = 0) {
    const auto rows = parse_csv(text);
    if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "delay_s" || rows[0][1] != "normalized_cc") {
        throw ParseError("HOM CSV must start with header 'delay_s,normalized_cc'");
    }
    HomCurve c;
    c.cell_id = cell_id;
    c.plateau_delay = plateau_delay;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 2) throw ParseError("HOM row " + std::to_string(i) + " needs two columns");
        c.delays.push_back(parse_number(rows[i][0]));
        c.coincidence_rate.push_back(parse_number(rows[i][1]));
    }
    return c;
}

/// Overlay of many curves in long format: "cell_id,delay_s,normalized_cc".
inline std::string hom_curves_to_csv(const std::vector<HomCurve>& curves) {
    std::ostringstream out;
    out << "cell_id,delay_s,normalized_cc\n";
    for (const auto& c : curves) {
        for (std::size_t i = 0; i < c.delays.size(); ++i) {
            out << c.cell_id << ',' << fmt_double(c.delays[i]) << ',' << fmt_double(c.coincidence_rate[i]) << '\n';
        }
    }
    return out.str();
}

inline json visibility_to_json(const VisibilityStats& s) {
    json per_cell = json::object();
    for (const auto& [id, v] : s.per_cell_visibility) per_cell[std::to_string(id)] = v;
    return json{{"per_cell", std::move(per_cell)}, {"average", s.average}, {"outliers", s.outliers}};
}

// ---------------------------------------------------------------- reports

inline json report_to_json(const FidelityReport& r) {
    return json{{"family", r.family},
                {"n_samples", r.n_samples},
                {"mean", r.mean},
                {"std", r.stddev},
                {"per_sample", r.per_sample}};
}

}  // namespace meshsim::io
