#include <qedlab/cli.hpp>

#include "presets_embedded.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace qedlab;

namespace {

constexpr int exit_compute_failure = 1;
constexpr int exit_invalid = 2;

struct Args {
  std::string config;
  std::string preset;
  std::string out = ".";
};

std::vector<RunConfig> load(const Args& a) {
  IniConfig user;
  if (!a.preset.empty()) {
    auto it = embedded_presets().find(a.preset);
    if (it == embedded_presets().end()) throw ConfigError("unknown preset '" + a.preset + "'");
    user = IniConfig::parse(it->second, "preset " + a.preset);
  }
  if (!a.config.empty()) user.merge(IniConfig::load(a.config));
  if (a.config.empty() && a.preset.empty()) throw ConfigError("give --config and/or --preset");
  return resolve_config(user, a.preset);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

int check(const std::vector<RunConfig>& jobs, Command cmd) {
  const auto rep = validate(jobs, cmd);
  if (!rep.ok()) {
    std::cerr << rep.text();
    return exit_invalid;
  }
  return 0;
}

int ground(const Args& a) {
  const auto jobs = load(a);
  if (int rc = check(jobs, Command::ground)) return rc;
  fs::create_directories(a.out);
  std::map<std::string, GroundResult> done;
  bool failed = false;
  // references first so deviations can be attached
  std::vector<const RunConfig*> order;
  for (const auto& j : jobs)
    if (j.reference.empty()) order.push_back(&j);
  for (const auto& j : jobs)
    if (!j.reference.empty()) order.push_back(&j);
  for (const RunConfig* j : order) {
    std::clog << "[" << j->label << "] " << to_string(j->method) << ": " << sweep_points(*j).size() << " points\n";
    GroundResult res = run_ground(*j);
    if (!j->reference.empty()) attach_reference(res, done.at(j->reference));
    const std::string name = j->preset + "_" + j->label + ".csv";
    write_file(fs::path(a.out) / name, ground_csv(res));
    write_file(fs::path(a.out) / (j->preset + "_" + j->label + ".plot"), ground_plot(res, name));
    for (const auto& row : res.rows)
      if (row.status != "ok") std::cerr << "[" << j->label << "] point failed: " << row.status << "\n";
    failed |= !res.all_ok();
    done.emplace(j->label, std::move(res));
  }
  return failed ? exit_compute_failure : 0;
}

int spectrum(const Args& a) {
  const auto jobs = load(a);
  if (int rc = check(jobs, Command::spectrum)) return rc;
  fs::create_directories(a.out);
  bool failed = false;
  for (const auto& j : jobs) {
    std::clog << "[" << j.label << "] " << to_string(j.method) << ": " << sweep_points(j).size() << " runs\n";
    auto res = run_spectrum(j);
    const std::string stem = j.preset + "_" + j.label;
    write_file(fs::path(a.out) / (stem + ".csv"), spectrum_csv(res));
    write_file(fs::path(a.out) / (stem + "_points.csv"), spectrum_points_csv(res));
    write_file(fs::path(a.out) / (stem + ".plot"), spectrum_plot(res, stem + ".csv"));
    for (const auto& p : res.map.points)
      if (!p.ok) std::cerr << "[" << j.label << "] run failed at omega " << p.omega_mode << ": " << p.status << "\n";
    failed |= !res.map.all_ok();
  }
  return failed ? exit_compute_failure : 0;
}

int validate_cmd(const Args& a) {
  const auto jobs = load(a);
  const auto rep = validate(jobs);
  std::cout << rep.text();
  if (rep.ok()) std::cout << "configuration is valid\n";
  return rep.ok() ? 0 : exit_invalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qedlab: cavity QED ground states and spectra"};
  app.require_subcommand(1);
  Args a;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", a.config, "configuration file")->check(CLI::ExistingFile);
    sub->add_option("--out", a.out, "output directory");
  };
  auto* g = app.add_subcommand("ground", "ground-state sweeps");
  add_common(g);
  g->add_option("--preset", a.preset, "built-in preset")
      ->check(CLI::IsMember({"fig3", "fig4", "fig5", "fig8", "fig9", "fig10"}));
  auto* s = app.add_subcommand("spectrum", "kick spectra over cavity frequencies");
  add_common(s);
  s->add_option("--preset", a.preset, "built-in preset")->check(CLI::IsMember({"fig2", "fig6"}));
  auto* v = app.add_subcommand("validate", "check a configuration without computing");
  add_common(v);
  v->add_option("--preset", a.preset, "built-in preset");

  CLI11_PARSE(app, argc, argv);
  try {
    if (g->parsed()) return ground(a);
    if (s->parsed()) return spectrum(a);
    return validate_cmd(a);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_invalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_compute_failure;
  }
}
