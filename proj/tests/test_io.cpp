#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "meshsim/io.hpp"
#include "meshsim/meshsim.hpp"
#include "oracles.hpp"

using namespace meshsim;
namespace fs = std::filesystem;

TEST(Io, MatrixRoundTrip) {
    const auto u = haar_random_unitary(5, 2).eigen();
    const auto text = io::matrix_to_json(u).dump();
    EXPECT_EQ(max_abs_diff(io::matrix_from_json(io::parse_json(text)).eigen(), u), 0.0);
    EXPECT_THROW(io::matrix_from_json(io::parse_json(R"({"rows":2,"cols":2,"entries":[[1,0]]})")), ParseError);
    EXPECT_THROW(io::parse_json("{not json"), ParseError);
}

TEST(Io, ConfigRoundTripIsExact) {
    std::mt19937_64 rng(3);
    for (int n : {2, 5, 12}) {
        const auto spec = mesh_layout(n);
        const auto c = oracle::random_config(spec, rng);
        const auto back = io::config_from_json(io::parse_json(io::config_to_json(c).dump()));
        EXPECT_EQ(back.theta, c.theta);
        EXPECT_EQ(back.phi, c.phi);
        EXPECT_EQ(back.input_phases, c.input_phases);
        EXPECT_EQ(back.output_phases, c.output_phases);
    }
}

TEST(Io, ConfigErrors) {
    const auto spec = mesh_layout(3);
    auto j = io::config_to_json(PhaseConfig::uniform(spec, 1.0, 2.0));
    auto missing = j;
    missing["cells"].erase(1);
    EXPECT_THROW(io::config_from_json(missing), ConfigError);
    auto misplaced = j;
    misplaced["cells"][0]["top_mode"] = 1;
    EXPECT_THROW(io::config_from_json(misplaced), ParseError);
    auto reversed = j;
    std::reverse(reversed["cells"].begin(), reversed["cells"].end());
    EXPECT_EQ(io::config_from_json(reversed).theta, std::vector<double>(3, 1.0));
}

TEST(Io, ImperfectionsShorthandAndRoundTrip) {
    const auto spec = mesh_layout(4);
    const auto imp = io::imperfections_from_json(
        io::parse_json(R"({"input_coupling_loss_db": 2.1, "coupler_splitting": 0.55, "phase_noise_sigma": 0.01})"),
        spec);
    EXPECT_EQ(imp.input_coupling_loss_db, std::vector<double>(4, 2.1));
    EXPECT_EQ(imp.coupler_splitting, std::vector<double>(12, 0.55));
    EXPECT_TRUE(imp.output_coupling_loss_db.empty());
    const auto back = io::imperfections_from_json(io::imperfections_to_json(imp), spec);
    EXPECT_EQ(back.coupler_splitting, imp.coupler_splitting);
    EXPECT_EQ(back.phase_noise_sigma, imp.phase_noise_sigma);
    EXPECT_THROW(io::imperfections_from_json(io::parse_json(R"({"coupler_splitting": 1.5})"), spec), ParseError);
}

TEST(Io, CurveCsvRoundTrip) {
    HeaterModel m{10.4, 0.2, 0.9, 0.05, 136};
    const auto c = synthesize_fringe(m, 15.0, 40, 0.01, 4);
    const auto back = io::curve_from_csv(io::curve_to_csv(c));
    EXPECT_EQ(back.voltages, c.voltages);
    EXPECT_EQ(back.top, c.top);
    EXPECT_EQ(back.bottom, c.bottom);
    EXPECT_THROW(io::curve_from_csv("v,t\n1,2\n"), ParseError);
    EXPECT_THROW(io::curve_from_csv("voltage,top\n0,abc\n"), ParseError);
}

TEST(Io, HeaterRoundTrip) {
    HeaterModel m{9.5, 1.25, 0.97, 0.01, 7};
    const auto back = io::heater_from_json(io::heater_to_json(m));
    EXPECT_EQ(back.v_pi, m.v_pi);
    EXPECT_EQ(back.theta_offset, m.theta_offset);
    EXPECT_EQ(back.contrast, m.contrast);
    EXPECT_EQ(back.background, m.background);
    EXPECT_EQ(back.heater_id, m.heater_id);
}

TEST(Io, HomCurveCsvRoundTrip) {
    SourceModel src;
    src.base_indistinguishability = 0.9;
    const auto curve = hom_scan(mesh_layout(4), 2, src, default_delay_grid(src));
    const auto back = io::hom_curve_from_csv(io::hom_curve_to_csv(curve), curve.plateau_delay, 2);
    EXPECT_EQ(back.delays, curve.delays);
    EXPECT_EQ(back.coincidence_rate, curve.coincidence_rate);
    EXPECT_EQ(visibility(back), visibility(curve));
}

TEST(Io, NumberParsing) {
    EXPECT_EQ(io::parse_number("1.5"), 1.5);
    EXPECT_THROW(io::parse_number("1.5x"), ParseError);
    EXPECT_THROW(io::parse_number(""), ParseError);
    EXPECT_EQ(io::fmt_double(std::numeric_limits<double>::infinity()), "inf");
    const double x = 0.1 + 0.2;
    EXPECT_EQ(io::parse_number(io::fmt_double(x)), x);
}

TEST(Io, AtomicWriteLeavesNoTemporary) {
    const fs::path dir = fs::temp_directory_path() / "meshsim_io_test";
    fs::remove_all(dir);
    io::write_atomic(dir / "out.txt", "hello");
    EXPECT_EQ(io::read_file(dir / "out.txt"), "hello");
    EXPECT_FALSE(fs::exists(dir / "out.txt.tmp"));
    fs::remove_all(dir);
    EXPECT_THROW(io::read_file(dir / "missing.json"), ParseError);
}
