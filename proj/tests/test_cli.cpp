#include <gtest/gtest.h>

#include <qedlab/cli.hpp>

#include "presets_embedded.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qedlab;
namespace fs = std::filesystem;

namespace {

const char* tiny = R"([run]
name = tiny
method = exact-pzw
[grid]
points = 41
spacing = 0.5
[truncation]
max_n = 3
[sweep]
lambda = 0.1, 0.0
omega = 0.5
)";

std::string read(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("qedlab_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(QEDLAB_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::vector<std::string> data_lines(const std::string& csv) {
  std::vector<std::string> out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') out.push_back(line);
  return out;
}

}  // namespace

TEST(IniConfig, ParsesSectionsCommentsAndOverrides) {
  auto c = IniConfig::parse("# top\n[a]\nx = 1 ; trailing\ny=two words\n[b]\nx = 3\n[a]\nx = 4\n");
  EXPECT_EQ(c.get("a", "x"), "4");
  EXPECT_EQ(c.get("a", "y"), "two words");
  EXPECT_EQ(c.get_double("b", "x", 0), 3.0);
  EXPECT_EQ(c.get("b", "missing", "d"), "d");
  IniConfig o = IniConfig::parse("[b]\nx = 9\n[c]\nz = 1\n");
  c.merge(o);
  EXPECT_EQ(c.get("b", "x"), "9");
  EXPECT_TRUE(c.has("c", "z"));
}

TEST(IniConfig, ReportsMalformedInput) {
  EXPECT_THROW(IniConfig::parse("x = 1\n"), ConfigError);
  EXPECT_THROW(IniConfig::parse("[a\n"), ConfigError);
  EXPECT_THROW(IniConfig::parse("[a]\njust words\n"), ConfigError);
  auto c = IniConfig::parse("[a]\nn = 1.5\nb = maybe\n");
  EXPECT_THROW(c.get_int("a", "n", 0), ConfigError);
  EXPECT_THROW(c.get_bool("a", "b", false), ConfigError);
}

TEST(ResolveConfig, SingleMethodUsesDefaults) {
  auto jobs = resolve_config(IniConfig::parse("[run]\nmethod = photon-free\n"));
  ASSERT_EQ(jobs.size(), 1u);
  EXPECT_EQ(jobs[0].method, Method::photon_free);
  EXPECT_EQ(jobs[0].label, "photon-free");
  EXPECT_EQ(jobs[0].grid_points, 301);
  EXPECT_EQ(jobs[0].max_n, 40);
  EXPECT_EQ(jobs[0].sweep_lambda, std::vector<double>{0.0});
  EXPECT_THROW(resolve_config(IniConfig::parse("[run]\nmethod = magic\n")), ConfigError);
}

TEST(ResolveConfig, JobsOverrideBaseKeys) {
  auto jobs = resolve_config(IniConfig::parse(embedded_presets().at("fig4")), "fig4");
  ASSERT_EQ(jobs.size(), 5u);
  EXPECT_EQ(jobs[0].label, "reference");
  EXPECT_EQ(jobs[0].max_n, 100);
  EXPECT_EQ(jobs[1].max_n, 4);
  EXPECT_EQ(jobs[1].reference, "reference");
  EXPECT_EQ(jobs[3].pheg_potential, PhegPotential::mollified_00);
  for (const auto& j : jobs) {
    EXPECT_EQ(j.boundary, Boundary::periodic);
    EXPECT_EQ(j.preset, "fig4");
    EXPECT_EQ(j.resolved.get("run", "job"), j.label);
    EXPECT_FALSE(j.resolved.sections().count("job.pf4"));
  }
}

TEST(ResolveConfig, EmptySweepAxisIsAnError) {
  EXPECT_THROW(resolve_config(IniConfig::parse("[sweep]\nlambda =\n")), ConfigError);
  EXPECT_THROW(resolve_config(IniConfig::parse("[sweep]\nomega = , ,\n")), ConfigError);
  EXPECT_THROW(resolve_config(IniConfig::parse("[run]\njobs =\n")), ConfigError);
}

TEST(ResolveConfig, RangeAndRatio) {
  auto jobs = resolve_config(IniConfig::parse("[mode]\nratio = 0.136\n[sweep]\nomega_range = 0.05, 1.0, 60\n"));
  auto pts = sweep_points(jobs[0]);
  ASSERT_EQ(pts.size(), 60u);
  EXPECT_GT(pts.front().omega, 0.05);
  EXPECT_DOUBLE_EQ(pts.back().omega, 1.0);
  for (const auto& p : pts) EXPECT_DOUBLE_EQ(p.lambda, 0.136 * std::sqrt(2.0 * p.omega));
  EXPECT_THROW(resolve_config(IniConfig::parse("[mode]\nratio = 0.1\n[sweep]\nlambda = 0.1\n")), ConfigError);
}

TEST(ResolveConfig, ResonantFrequencyFollowsSoftening) {
  auto jobs = resolve_config(
      IniConfig::parse("[grid]\npoints = 61\nspacing = 0.5\n[mode]\nomega = resonance\n[sweep]\nsoftening = 1, 2\n"));
  auto pts = sweep_points(jobs[0]);
  ASSERT_EQ(pts.size(), 2u);
  // a softer atom has the lower gap, so it sorts first
  EXPECT_EQ(pts[0].softening, 2.0);
  EXPECT_NEAR(pts[1].omega, bare_excitation(Grid1D(61, 0.5, Boundary::dirichlet), 1.0, FdOrder::fourth), 1e-12);
  EXPECT_LT(pts[0].omega, pts[1].omega);
}

TEST(Validate, FlagsIncompatibleGridsAndEchoesDimensions) {
  auto bad = validate(resolve_config(IniConfig::parse("[run]\nmethod = pheg\n")));
  ASSERT_FALSE(bad.ok());
  EXPECT_NE(bad.errors[0].find("periodic"), std::string::npos);
  auto pzw = validate(resolve_config(IniConfig::parse("[run]\nmethod = exact-pzw\n[grid]\nboundary = periodic\n")));
  EXPECT_FALSE(pzw.ok());

  auto good = validate(resolve_config(IniConfig::parse("[mode]\nratio = 0.136\n[sweep]\nomega = 0.5\n")));
  ASSERT_TRUE(good.ok()) << good.text();
  const std::string text = good.text();
  EXPECT_NE(text.find("dimension 12341"), std::string::npos) << text;
  EXPECT_NE(text.find("lambda = 0.136"), std::string::npos) << text;
  std::ostringstream wt;
  wt << std::setprecision(6) << std::sqrt(0.25 + std::pow(0.136, 2) * 1.0);
  EXPECT_NE(text.find("dressed omega = " + wt.str()), std::string::npos) << text;

  auto as_spectrum = validate(resolve_config(IniConfig::parse("[run]\nmethod = pheg\n[grid]\nboundary = periodic\n")),
                              Command::spectrum);
  EXPECT_FALSE(as_spectrum.ok());
}

TEST(Output, TwelveSignificantDigits) {
  EXPECT_EQ(fmt(-0.5), "-5.00000000000e-01");
  EXPECT_EQ(fmt(1.0 / 3.0), "3.33333333333e-01");
  EXPECT_EQ(fmt(std::nan("")), "nan");
}

TEST(RunGround, DeterministicSelfDescribingCsv) {
  auto jobs = resolve_config(IniConfig::parse(tiny));
  auto a = ground_csv(run_ground(jobs[0], 2));
  auto b = ground_csv(run_ground(jobs[0], 1));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.rfind("# qedlab ground output", 0), 0u);
  EXPECT_NE(a.find("#   points = 41"), std::string::npos);
  auto lines = data_lines(a);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0].rfind("method,job,lambda", 0), 0u);
  // ascending parameter tuple
  EXPECT_NE(lines[1].find(",0.00000000000e+00,"), std::string::npos);
  EXPECT_EQ(lines[1].substr(lines[1].size() - 3), ",ok");
}

TEST(RunGround, FailedPointsBecomeRows) {
  auto jobs = resolve_config(IniConfig::parse(
      "[run]\nmethod = qedft-pxlda\n[grid]\npoints = 41\nspacing = 0.5\n[options]\nscf_max_iterations = 1\n"
      "[sweep]\nlambda = 0.2\n"));
  auto res = run_ground(jobs[0]);
  EXPECT_FALSE(res.all_ok());
  EXPECT_NE(res.rows[0].status.find("failed"), std::string::npos);
  EXPECT_TRUE(std::isnan(res.rows[0].energy));
}

TEST(RunGround, ReferenceDeviationColumn) {
  const char* cfg = R"([run]
jobs = ref, pf
[grid]
points = 41
spacing = 0.5
[sweep]
lambda = 0.2
[job.ref]
method = exact-pzw
truncation.max_n = 6
[job.pf]
method = photon-free
reference = ref
)";
  auto jobs = resolve_config(IniConfig::parse(cfg));
  auto ref = run_ground(jobs[0]);
  auto pf = run_ground(jobs[1]);
  attach_reference(pf, ref);
  EXPECT_NEAR(pf.rows[0].deviation, std::abs(pf.rows[0].energy - ref.rows[0].energy), 1e-15);
  EXPECT_GT(pf.rows[0].deviation, 0.0);
}

TEST(Presets, AllShippedPresetsResolveAndValidate) {
  for (const char* name : {"fig2", "fig3", "fig4", "fig5", "fig6", "fig8", "fig9", "fig10"}) {
    ASSERT_TRUE(embedded_presets().count(name)) << name;
    const bool spectrum = std::string(name) == "fig2" || std::string(name) == "fig6";
    auto jobs = resolve_config(IniConfig::parse(embedded_presets().at(name)), name);
    auto rep = validate(jobs, spectrum ? Command::spectrum : Command::ground);
    EXPECT_TRUE(rep.ok()) << name << "\n" << rep.text();
  }
}

TEST(Binary, ValidateReportsAndSetsExitCode) {
  auto d = scratch("validate");
  std::ofstream(d / "bad.cfg") << "[run]\nmethod = pheg\n";
  EXPECT_EQ(run_cli("validate --config " + (d / "bad.cfg").string(), d / "log"), 2);
  EXPECT_NE(read(d / "log").find("periodic"), std::string::npos);
  std::ofstream(d / "good.cfg") << "[truncation]\nmax_n = 40\n";
  EXPECT_EQ(run_cli("validate --config " + (d / "good.cfg").string(), d / "log"), 0);
  EXPECT_NE(read(d / "log").find("dimension 12341"), std::string::npos);
}

TEST(Binary, EmptySweepStopsBeforeCompute) {
  auto d = scratch("empty");
  std::ofstream(d / "c.cfg") << "[sweep]\nlambda =\n";
  EXPECT_EQ(run_cli("ground --config " + (d / "c.cfg").string() + " --out " + (d / "out").string(), d / "log"), 2);
  EXPECT_FALSE(fs::exists(d / "out"));
}

TEST(Binary, GroundWritesIdenticalFilesOnRepeat) {
  auto d = scratch("ground");
  std::ofstream(d / "c.cfg") << tiny;
  const std::string args = "ground --config " + (d / "c.cfg").string() + " --out ";
  setenv("QEDLAB_WORKERS", "2", 1);
  ASSERT_EQ(run_cli(args + (d / "a").string(), d / "log"), 0) << read(d / "log");
  unsetenv("QEDLAB_WORKERS");
  ASSERT_EQ(run_cli(args + (d / "b").string(), d / "log"), 0) << read(d / "log");
  EXPECT_TRUE(fs::exists(d / "a" / "tiny_exact-pzw.plot"));
  EXPECT_EQ(read(d / "a" / "tiny_exact-pzw.csv"), read(d / "b" / "tiny_exact-pzw.csv"));
}

TEST(Binary, FailedPointGivesNonzeroExit) {
  auto d = scratch("fail");
  std::ofstream(d / "c.cfg")
      << "[run]\nmethod = qedft-pxlda\n[grid]\npoints = 41\nspacing = 0.5\n[options]\nscf_max_iterations = 1\n"
         "[sweep]\nlambda = 0.0, 0.3\n";
  EXPECT_EQ(run_cli("ground --config " + (d / "c.cfg").string() + " --out " + d.string(), d / "log"), 1);
  const auto lines = data_lines(read(d / "run_qedft-pxlda.csv"));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_NE(lines[2].find("failed"), std::string::npos);
}

TEST(Binary, SpectrumSinglePointIsOneColumnMatrix) {
  auto d = scratch("spectrum");
  std::ofstream(d / "c.cfg") << R"([run]
name = one
method = photon-free
[grid]
points = 41
spacing = 0.5
[mode]
ratio = 0.136
[dynamics]
dt = 0.01
t_end = 20
stride = 2
omega_points = 11
[sweep]
omega = 0.4
)";
  ASSERT_EQ(run_cli("spectrum --config " + (d / "c.cfg").string() + " --out " + d.string(), d / "log"), 0)
      << read(d / "log");
  const auto lines = data_lines(read(d / "one_photon-free.csv"));
  ASSERT_EQ(lines.size(), 12u);
  EXPECT_EQ(lines[0], "omega,4.00000000000e-01");
  EXPECT_TRUE(fs::exists(d / "one_photon-free.plot"));
  EXPECT_NE(read(d / "one_photon-free_points.csv").find(",ok"), std::string::npos);
  EXPECT_NE(run_cli("spectrum --preset fig3 --out " + d.string(), d / "log"), 0);
}

TEST(Binary, SpectrumRejectsGroundOnlyMethods) {
  auto d = scratch("spectrum_bad");
  std::ofstream(d / "c.cfg") << "[run]\nmethod = pzw-selfpol\n";
  EXPECT_EQ(run_cli("spectrum --config " + (d / "c.cfg").string() + " --out " + d.string(), d / "log"), 2);
}
