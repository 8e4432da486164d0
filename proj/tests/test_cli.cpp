#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "meshsim/io.hpp"
#include "meshsim/meshsim.hpp"

using namespace meshsim;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("meshsim_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    /// Runs the CLI with `args` inside the scratch directory; returns the exit code.
    int run(const std::string& args, const std::string& env = "") const {
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" MESHSIM_CLI_PATH "' " + args +
                                " > stdout.txt 2> stderr.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    fs::path path(const std::string& name) const { return dir_ / name; }
    std::string read(const std::string& name) const { return io::read_file(path(name)); }
    json read_json(const std::string& name) const { return io::read_json(path(name)); }
    void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

    fs::path dir_;
};

Eigen::MatrixXd read_intensity(const std::string& text) {
    const auto rows = io::parse_csv(text);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        for (std::size_t k = 0; k < rows[j].size(); ++k) {
            m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = io::parse_number(rows[j][k]);
        }
    }
    return m;
}

}  // namespace

TEST_F(Cli, DecomposeIdentity) {
    write("identity.json", io::matrix_to_json(MatrixXc::Identity(12, 12)).dump());
    ASSERT_EQ(run("decompose identity.json -o out"), 0);
    const auto j = read_json("out/phases.json");
    EXPECT_LT(j.at("residual").get<double>(), 1e-10);
    EXPECT_EQ(j.at("cells").size(), 66u);
    EXPECT_TRUE(fs::exists(path("out/manifest.json")));
}

TEST_F(Cli, DecomposeHaarAndSimulate) {
    ASSERT_EQ(run("haar --dim 12 --seed 5 -o m"), 0);
    ASSERT_EQ(run("decompose m/matrix.json -o p"), 0);
    const auto r = read_json("p/phases.json");
    EXPECT_LT(r.at("residual").get<double>(), 1e-9);
    ASSERT_EQ(run("simulate p/phases.json -o s"), 0);
    const auto target = io::matrix_from_json(read_json("m/matrix.json")).eigen();
    const auto s = io::matrix_from_json(read_json("s/smatrix.json")).eigen();
    EXPECT_LT(max_abs_diff_up_to_phase(s, target), 1e-9);
    EXPECT_FALSE(read_json("s/smatrix.json").at("lossy").get<bool>());
}

TEST_F(Cli, NonUnitaryInputIsAValidationFailure) {
    write("ones.json", io::matrix_to_json(MatrixXc::Ones(4, 4)).dump());
    EXPECT_EQ(run("decompose ones.json -o out"), 3);
    EXPECT_FALSE(fs::exists(path("out/phases.json")));
    EXPECT_NE(read("stderr.txt").find("deviation"), std::string::npos);
}

TEST_F(Cli, InputErrors) {
    write("bad.json", "{\"rows\": 2");
    EXPECT_EQ(run("decompose bad.json"), 2);
    EXPECT_EQ(run("decompose missing.json"), 2);
    EXPECT_EQ(run("nonsense"), 2);
    EXPECT_EQ(run("hom --cell 99 -o h"), 2);
    EXPECT_FALSE(fs::exists(path("h")));
    write("partial.json", R"({"n_modes": 3, "cells": [{"id": 0, "theta": 1, "phi": 0}]})");
    EXPECT_EQ(run("simulate partial.json"), 2);
}

TEST_F(Cli, LossySimulation) {
    ASSERT_EQ(run("haar --dim 12 --seed 1 -o m"), 0);
    ASSERT_EQ(run("decompose m/matrix.json -o p"), 0);
    write("loss.json", json{{"input_coupling_loss_db", 2.1},
                            {"output_coupling_loss_db", 2.1},
                            {"propagation_loss_db_per_layer", 0.8 / 12.0}}
                           .dump());
    ASSERT_EQ(run("simulate p/phases.json -i loss.json -o s"), 0);
    const auto p = read_intensity(read("s/intensity.csv"));
    for (Eigen::Index k = 0; k < p.cols(); ++k) EXPECT_NEAR(p.col(k).sum(), std::pow(10.0, -0.5), 1e-9);
    EXPECT_TRUE(read_json("s/smatrix.json").at("lossy").get<bool>());
}

TEST_F(Cli, PauliX6Pattern) {
    ASSERT_EQ(run("target --family pauli_x --dim 12 --power 6 -o t"), 0);
    ASSERT_EQ(run("decompose t/matrix.json -o p"), 0);
    ASSERT_EQ(run("simulate p/phases.json -o s"), 0);
    const auto p = read_intensity(read("s/intensity.csv"));
    ASSERT_EQ(p.rows(), 12);
    for (int j = 0; j < 12; ++j) {
        for (int k = 0; k < 12; ++k) EXPECT_NEAR(p(j, k), j == (k + 6) % 12 ? 1.0 : 0.0, 1e-9);
    }
}

TEST_F(Cli, SynthesizeAndCalibrate) {
    write("model.json", R"({"v_pi": 10.4})");
    ASSERT_EQ(run("synth-fringe model.json --noise 0 -o c"), 0);
    ASSERT_EQ(run("calibrate c/curve.csv -o f"), 0);
    const auto fit = read_json("f/fit.json");
    EXPECT_NEAR(fit.at("model").at("v_pi").get<double>(), 10.4, 1e-5);

    ASSERT_EQ(run("synth-fringe model.json --noise 0.01 --seed 3 -o n"), 0);
    ASSERT_EQ(run("calibrate n/curve.csv -o g"), 0);
    const auto noisy = read_json("g/fit.json");
    EXPECT_TRUE(noisy.contains("covariance_diag"));
    EXPECT_GT(noisy.at("covariance_diag").at("v_pi").get<double>(), 0.0);
}

TEST_F(Cli, ConstantCurveIsANumericalFailure) {
    std::string csv = "voltage,top,bottom\n";
    for (int i = 0; i < 20; ++i) csv += std::to_string(i) + ",0.4,0.4\n";
    write("flat.csv", csv);
    EXPECT_EQ(run("calibrate flat.csv -o f"), 4);
    EXPECT_FALSE(fs::exists(path("f/fit.json")));
}

TEST_F(Cli, HomAllCells) {
    write("source.json", R"({"base_indistinguishability": 0.94})");
    ASSERT_EQ(run("hom --all --source source.json -o h"), 0);
    const auto vis = read_json("h/visibility.json");
    EXPECT_NEAR(vis.at("average").get<double>(), 0.94, 1e-9);
    EXPECT_TRUE(vis.at("outliers").empty());
    EXPECT_EQ(vis.at("per_cell").size(), 66u);
    EXPECT_EQ(read("h/hom_cell_0.csv").rfind("delay_s,normalized_cc", 0), 0u);
    EXPECT_TRUE(fs::exists(path("h/homcurves.csv")));
}

TEST_F(Cli, HomSingleCellDip) {
    ASSERT_EQ(run("hom --cell 0 -o h"), 0);
    const auto curve = io::hom_curve_from_csv(read("h/hom_cell_0.csv"), 4e-12);
    EXPECT_NEAR(*std::min_element(curve.coincidence_rate.begin(), curve.coincidence_rate.end()), 0.0, 1e-12);
}

TEST_F(Cli, HomFlagsImbalancedCells) {
    std::vector<double> k(132, 0.5);
    for (int id : {7, 40, 58}) {
        k[static_cast<std::size_t>(2 * id)] = 0.8;
        k[static_cast<std::size_t>(2 * id + 1)] = 0.8;
    }
    write("imp.json", json{{"coupler_splitting", k}}.dump());
    ASSERT_EQ(run("hom --all -i imp.json -o h"), 0);
    EXPECT_EQ(read_json("h/visibility.json").at("outliers"), json::parse("[7, 40, 58]"));
}

TEST_F(Cli, ReportSwitchingIdeal) {
    ASSERT_EQ(run("report --family switching --samples 12 --noise 0 -o r"), 0);
    const auto r = read_json("r/report.json");
    EXPECT_NEAR(r.at("mean").get<double>(), 1.0, 1e-9);
    EXPECT_NEAR(r.at("std").get<double>(), 0.0, 1e-9);
    EXPECT_EQ(r.at("per_sample").size(), 12u);
}

TEST_F(Cli, ManifestRerunIsBitIdentical) {
    ASSERT_EQ(run("report --family haar --samples 8 --noise 0.1 --seed 21 -o a"), 0);
    ASSERT_EQ(run("rerun a/manifest.json -o b"), 0);
    EXPECT_EQ(read("a/report.json"), read("b/report.json"));
    const auto manifest = read_json("a/manifest.json");
    EXPECT_EQ(manifest.at("command").get<std::string>(), "report");
    EXPECT_EQ(manifest.at("seed").get<std::uint64_t>(), 21u);

    ASSERT_EQ(run("hom --all -o h1"), 0);
    ASSERT_EQ(run("rerun h1/manifest.json -o h2"), 0);
    EXPECT_EQ(read("h1/homcurves.csv"), read("h2/homcurves.csv"));
}

TEST_F(Cli, SeedFromEnvironment) {
    ASSERT_EQ(run("haar --dim 4 -o e", "MESHSIM_SEED=17"), 0);
    ASSERT_EQ(run("haar --dim 4 --seed 17 -o f"), 0);
    ASSERT_EQ(run("haar --dim 4 --seed 18 -o g"), 0);
    EXPECT_EQ(read("e/matrix.json"), read("f/matrix.json"));
    EXPECT_NE(read("e/matrix.json"), read("g/matrix.json"));
    EXPECT_EQ(read_json("e/manifest.json").at("seed").get<std::uint64_t>(), 17u);
    EXPECT_EQ(run("haar --dim 4 -o x", "MESHSIM_SEED=abc"), 2);
}
