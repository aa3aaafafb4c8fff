#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "ioncavity/config.hpp"
#include "ioncavity/spectroscopy.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(IONCAVITY_SIM_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ioncavity_cli_" + name);
  fs::remove_all(d);
  return d;
}

fs::path write_config(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("ioncavity_cli_" + name + ".cfg");
  std::ofstream(p) << text;
  return p;
}

const std::string kConfigs = IONCAVITY_CONFIG_DIR;

}  // namespace

TEST(Cli, DressedStatesSymmetricCase) {
  const auto out = fresh_dir("dressed");
  ASSERT_EQ(run("dressed-states --config " + kConfigs + "/dressed_states.cfg --out " + out.string()), 0);
  const auto csv = slurp(out / "dressed-states.csv");
  EXPECT_NE(csv.find("u_minus,-1.414213562373095"), std::string::npos);
  EXPECT_NE(csv.find("u_dark,0,"), std::string::npos);
  EXPECT_NE(csv.find("u_plus,1.414213562373095"), std::string::npos);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["protocol"], "dressed-states");
  EXPECT_EQ(m["outputs"].size(), 1u);
  EXPECT_EQ(m["config"]["g1_mhz"], "1");
  EXPECT_TRUE(m.contains("wall_seconds"));
  EXPECT_EQ(m["config_hash"].get<std::string>().size(), 16u);
}

TEST(Cli, DopplerCorrection) {
  const auto out = fresh_dir("doppler");
  ASSERT_EQ(run("doppler-correction --config " + kConfigs + "/doppler.cfg --out " + out.string()), 0);
  std::istringstream in(slurp(out / "doppler-correction.csv"));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  const double g0 = std::stod(row.substr(row.rfind(',') + 1));
  EXPECT_NEAR(g0, 15.6, 0.05);
}

TEST(Cli, NoIonTransmissionIsLorentzianOfWidthKappa) {
  const auto out = fresh_dir("noion");
  ASSERT_EQ(run("transmission-scan --config " + kConfigs + "/transmission.cfg --set no_ion=true --set fock_cutoff=3 --out " +
                out.string()),
            0);
  const auto scan = ioncavity::SpectrumScan::load((out / "transmission-scan.csv").string());
  EXPECT_EQ(scan.protocol, "transmission-scan-no-ion");
  const auto fit = ioncavity::fit_lorentzian(scan.detunings(), scan.signals());
  EXPECT_NEAR(fit.hwhm, 4.1, 1e-6);
  EXPECT_NEAR(fit.center, 0.0, 1e-9);
  EXPECT_TRUE(fs::exists(out / "fit.csv"));
}

TEST(Cli, SameConfigGivesIdenticalCsvAndHash) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  const std::string args = "emission-scan --config " + kConfigs + "/emission_scan.cfg --set scan_points=9 --out ";
  ASSERT_EQ(run(args + a.string()), 0);
  ASSERT_EQ(run(args + b.string() + " --threads 2"), 0);
  EXPECT_EQ(slurp(a / "emission-scan.csv"), slurp(b / "emission-scan.csv"));
  EXPECT_EQ(slurp(a / "fit.csv"), slurp(b / "fit.csv"));
  const auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
  const auto c = fresh_dir("det_c");
  ASSERT_EQ(run(args + c.string() + " --set b_gauss=0.8"), 0);
  EXPECT_NE(nlohmann::json::parse(slurp(c / "manifest.json"))["config_hash"], ma["config_hash"]);
}

TEST(Cli, ConfigErrorsExitTwoAndListEverything) {
  const auto out = fresh_dir("bad");
  const auto cfg = write_config("bad", "kappa_mhz = -1\nmystery = 4\ng0_mhz = x\n");
  const std::string cmd = std::string(IONCAVITY_SIM_PATH) + " emission-scan --config " + cfg.string() + " --out " + out.string() +
                          " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string text;
  char buf[256];
  while (fgets(buf, sizeof buf, pipe)) text += buf;
  const int status = pclose(pipe);
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_NE(text.find("config_error"), std::string::npos);
  EXPECT_NE(text.find("kappa_mhz must be > 0"), std::string::npos);
  EXPECT_NE(text.find("unknown key 'mystery'"), std::string::npos);
  EXPECT_NE(text.find("g0_mhz: not a number"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run("no-such-protocol --config " + cfg.string() + " --out " + out.string()), 2);
  EXPECT_EQ(run("emission-scan --config /nonexistent.cfg --out " + out.string()), 2);
}

TEST(Cli, ValidateOnlyWritesNothing) {
  const auto out = fresh_dir("validate");
  EXPECT_EQ(run("raman-dispersion --config " + kConfigs + "/raman_dispersion.cfg --validate-only --out " + out.string()), 0);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, FitFailureExitsFour) {
  const auto out = fresh_dir("fitfail");
  const auto cfg = write_config("fitfail", "peak_ratio = 0.999\ndrive_points = 3\n");
  EXPECT_EQ(run("estimate-drive --config " + cfg.string() + " --out " + out.string()), 4);
}

TEST(Cli, SolverFailureExitsThree) {
  const auto out = fresh_dir("solverfail");
  const auto cfg = write_config("solverfail", "ode_rel_tol = 1e-300\node_abs_tol = 1e-300\nscan_points = 3\n");
  EXPECT_EQ(run("emission-scan --config " + cfg.string() + " --out " + out.string()), 3);
}

TEST(Cli, ShippedConfigsValidate) {
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".cfg") continue;
    const auto name = entry.path().stem().string();
    std::string protocol = "emission-scan";
    if (name.find("dispersion") != std::string::npos) protocol = "raman-dispersion";
    EXPECT_EQ(run(protocol + " --config " + entry.path().string() + " --validate-only"), 0) << name;
  }
}
