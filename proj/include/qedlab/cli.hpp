#pragma once

// Experiment driver: INI-style configuration, parameter sweeps, CSV and plot-script output.

#include "dynamics.hpp"
#include "pheg.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace qedlab {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

}  // namespace detail

// [section] headers, key = value lines, '#' or ';' comments. Later keys win.
class IniConfig {
public:
  using Section = std::map<std::string, std::string>;

  static IniConfig parse(const std::string& text, const std::string& origin = "<config>") {
    IniConfig c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section");
        section = detail::trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
        c.sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      if (section.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside a section");
      const std::string key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      c.sections_[section][key] = detail::trim(line.substr(eq + 1));
    }
    return c;
  }

  static IniConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  // keys of `over` replace ours
  void merge(const IniConfig& over) {
    for (const auto& [s, kv] : over.sections_)
      for (const auto& [k, v] : kv) sections_[s][k] = v;
  }

  bool has(const std::string& s, const std::string& k) const {
    auto it = sections_.find(s);
    return it != sections_.end() && it->second.count(k);
  }
  std::string get(const std::string& s, const std::string& k, const std::string& def = "") const {
    auto it = sections_.find(s);
    if (it == sections_.end()) return def;
    auto jt = it->second.find(k);
    return jt == it->second.end() ? def : jt->second;
  }
  void set(const std::string& s, const std::string& k, const std::string& v) { sections_[s][k] = v; }
  void erase_section(const std::string& s) { sections_.erase(s); }

  double get_double(const std::string& s, const std::string& k, double def) const {
    if (!has(s, k)) return def;
    return to_double(get(s, k), s + "." + k);
  }
  int get_int(const std::string& s, const std::string& k, int def) const {
    if (!has(s, k)) return def;
    const std::string v = get(s, k);
    try {
      std::size_t pos = 0;
      const int r = std::stoi(v, &pos);
      if (pos == v.size()) return r;
    } catch (const std::exception&) {
    }
    throw ConfigError(s + "." + k + ": expected an integer, got '" + v + "'");
  }
  bool get_bool(const std::string& s, const std::string& k, bool def) const {
    if (!has(s, k)) return def;
    const std::string v = get(s, k);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError(s + "." + k + ": expected a boolean, got '" + v + "'");
  }

  static double to_double(const std::string& v, const std::string& what) {
    try {
      std::size_t pos = 0;
      const double r = std::stod(v, &pos);
      if (pos == v.size()) return r;
    } catch (const std::exception&) {
    }
    throw ConfigError(what + ": expected a number, got '" + v + "'");
  }

  const std::map<std::string, Section>& sections() const { return sections_; }

  std::string dump(const std::string& prefix = "") const {
    std::ostringstream out;
    for (const auto& [s, kv] : sections_) {
      out << prefix << "[" << s << "]\n";
      for (const auto& [k, v] : kv) out << prefix << k << " = " << v << "\n";
    }
    return out.str();
  }

private:
  std::map<std::string, Section> sections_;
};

enum class Method {
  exact_pf,
  exact_pzw,
  pzw_selfpol,
  photon_free,
  pheg,
  qedft_px,
  qedft_pxlda,
  maxwell,
  pxlda_maxwell
};

inline const std::map<std::string, Method>& method_names() {
  static const std::map<std::string, Method> m{
      {"exact-pf", Method::exact_pf},       {"exact-pzw", Method::exact_pzw},   {"pzw-selfpol", Method::pzw_selfpol},
      {"photon-free", Method::photon_free}, {"pheg", Method::pheg},             {"qedft-px", Method::qedft_px},
      {"qedft-pxlda", Method::qedft_pxlda}, {"maxwell", Method::maxwell},       {"pxlda-maxwell", Method::pxlda_maxwell}};
  return m;
}

inline std::string to_string(Method m) {
  for (const auto& [k, v] : method_names())
    if (v == m) return k;
  return "?";
}

inline Method parse_method(const std::string& s) {
  auto it = method_names().find(s);
  if (it == method_names().end()) throw ConfigError("unknown method '" + s + "'");
  return it->second;
}

inline bool is_spectrum_method(Method m) {
  return m == Method::exact_pf || m == Method::exact_pzw || m == Method::photon_free || m == Method::maxwell ||
         m == Method::pxlda_maxwell;
}

// Built-in defaults; every resolved config starts from these.
inline const char* default_config_text() {
  return R"([run]
name = run
method = exact-pzw

[grid]
points = 301
spacing = 0.1
boundary = dirichlet
order = 4

[potential]
softening = 1.0

[mode]
omega = 0.4
lambda = 0.0
count = 1
polarization = 1

[truncation]
max_n = 40

[pheg]
potential = raw

[functional]
kappa = 1.0
dimension = 1
spin_factor = closed_shell
mollify = false
px_form = density_curvature
lda_route = closed_form

[options]
include_zero_point = false
scf_max_iterations = 3000

[dynamics]
dt = 5e-4
t_end = 1000
damping = 5e-3
stride = 20
kick_strength = 1e-4
kick_t0 = 1.0
kick_width = 1e-2
omega_min = 0.0
omega_max = 1.5
omega_points = 1501
history = auxiliary_ode
)";
}

// One point of a sweep: the full parameter tuple.
struct SweepTuple {
  double lambda = 0;
  double omega = 0;
  double softening = 1;
  double kappa = 1;
  bool operator<(const SweepTuple& o) const {
    return std::tie(lambda, omega, softening, kappa) < std::tie(o.lambda, o.omega, o.softening, o.kappa);
  }
};

// One method with fully resolved settings.
struct RunConfig {
  std::string preset = "run";
  std::string label;  // output stem, defaults to the method name
  Method method = Method::exact_pzw;
  IniConfig resolved;  // everything, for the output header
  int grid_points = 301;
  double grid_spacing = 0.1;
  Boundary boundary = Boundary::dirichlet;
  FdOrder order = FdOrder::fourth;
  double softening = 1;
  double omega = 0.4;
  std::optional<double> lambda;
  std::optional<double> ratio;  // g / omega
  bool omega_resonance = false;
  int mode_count = 1;
  double polarization = 1;
  int max_n = 40;
  PhegPotential pheg_potential = PhegPotential::raw;
  XcConfig xc;
  bool include_zero_point = false;
  int scf_max_iterations = 3000;
  SpectrumRun run;
  KickProtocol kick;
  HistoryMode history = HistoryMode::auxiliary_ode;
  std::string reference;  // label of a job that gives the deviation column
  std::string compare = "energy";  // or photon_number
  // sweep axes; an absent axis holds the single base value
  std::vector<double> sweep_lambda, sweep_omega, sweep_softening, sweep_kappa;
  bool sweep_omega_resonance = false;

  Grid1D grid() const { return Grid1D(grid_points, grid_spacing, boundary); }
};

namespace detail {

inline std::vector<double> parse_numbers(const std::string& v, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(v)) out.push_back(IniConfig::to_double(item, what));
  return out;
}

// "a, b, n" -> n points over (a, b]
inline std::vector<double> parse_range(const std::string& v, const std::string& what) {
  auto parts = split_list(v);
  if (parts.size() != 3) throw ConfigError(what + ": expected 'start, stop, count'");
  const double a = IniConfig::to_double(parts[0], what), b = IniConfig::to_double(parts[1], what);
  const double n = IniConfig::to_double(parts[2], what);
  if (n < 1 || n != std::floor(n)) throw ConfigError(what + ": count must be a positive integer");
  std::vector<double> out;
  for (int i = 1; i <= static_cast<int>(n); ++i) out.push_back(a + (b - a) * i / n);
  return out;
}

}  // namespace detail

// Expands [run] jobs (or the single [run] method) into resolved per-method configs.
// Job sections look like [job.<label>] and hold "section.key = value" overrides plus
// optional "method" and "reference".
inline std::vector<RunConfig> resolve_config(const IniConfig& user, const std::string& preset_name = "") {
  IniConfig base = IniConfig::parse(default_config_text(), "<defaults>");
  base.merge(user);
  std::vector<std::string> labels = detail::split_list(base.get("run", "jobs"));
  if (base.has("run", "jobs") && labels.empty()) throw ConfigError("run.jobs is empty");
  if (labels.empty()) labels.push_back("");
  std::vector<RunConfig> out;
  std::set<std::string> seen;
  for (const auto& label : labels) {
    IniConfig c = base;
    std::string method_name = base.get("run", "method");
    std::string reference;
    if (!label.empty()) {
      const std::string sec = "job." + label;
      if (!base.sections().count(sec)) throw ConfigError("job '" + label + "' has no [" + sec + "] section");
      for (const auto& [k, v] : base.sections().at(sec)) {
        if (k == "method") method_name = v;
        else if (k == "reference") reference = v;
        else if (k == "compare") c.set("run", "compare", v);
        else {
          const auto dot = k.find('.');
          if (dot == std::string::npos) throw ConfigError(sec + ": override '" + k + "' must be section.key");
          c.set(k.substr(0, dot), k.substr(dot + 1), v);
        }
      }
    }
    for (const auto& [s, kv] : base.sections())
      if (s.rfind("job.", 0) == 0) c.erase_section(s);
    c.set("run", "method", method_name);
    if (!label.empty()) c.set("run", "job", label);
    if (!reference.empty()) c.set("run", "reference", reference);
    if (!preset_name.empty()) c.set("run", "name", preset_name);

    RunConfig r;
    r.method = parse_method(method_name);
    r.preset = c.get("run", "name", "run");
    r.label = label.empty() ? method_name : label;
    if (!seen.insert(r.label).second) throw ConfigError("duplicate job label '" + r.label + "'");
    r.reference = reference;
    r.compare = c.get("run", "compare", "energy");
    if (r.compare != "energy" && r.compare != "photon_number")
      throw ConfigError("compare must be energy or photon_number");
    r.grid_points = c.get_int("grid", "points", 301);
    r.grid_spacing = c.get_double("grid", "spacing", 0.1);
    const std::string b = c.get("grid", "boundary");
    if (b == "dirichlet") r.boundary = Boundary::dirichlet;
    else if (b == "periodic") r.boundary = Boundary::periodic;
    else throw ConfigError("grid.boundary must be dirichlet or periodic");
    const int ord = c.get_int("grid", "order", 4);
    if (ord != 2 && ord != 4) throw ConfigError("grid.order must be 2 or 4");
    r.order = ord == 2 ? FdOrder::second : FdOrder::fourth;
    r.softening = c.get_double("potential", "softening", 1.0);
    if (c.get("mode", "omega") == "resonance") r.omega_resonance = true;
    else r.omega = c.get_double("mode", "omega", 0.4);
    if (c.has("mode", "ratio")) r.ratio = c.get_double("mode", "ratio", 0.0);
    else r.lambda = c.get_double("mode", "lambda", 0.0);
    r.mode_count = c.get_int("mode", "count", 1);
    r.polarization = c.get_double("mode", "polarization", 1.0);
    r.max_n = c.get_int("truncation", "max_n", 40);
    const std::string pp = c.get("pheg", "potential");
    if (pp == "raw") r.pheg_potential = PhegPotential::raw;
    else if (pp == "mollified_00") r.pheg_potential = PhegPotential::mollified_00;
    else if (pp == "unmollified") r.pheg_potential = PhegPotential::unmollified;
    else throw ConfigError("pheg.potential must be raw, mollified_00 or unmollified");

    r.xc.functional = r.method == Method::qedft_px ? XcFunctional::px_orbital : XcFunctional::pxlda;
    if (r.method == Method::maxwell) r.xc.functional = XcFunctional::none;
    r.xc.kappa = c.get_double("functional", "kappa", 1.0);
    r.xc.dimension = c.get_int("functional", "dimension", 1);
    const std::string sf = c.get("functional", "spin_factor");
    if (sf == "closed_shell") r.xc.spin_factor = SpinFactor::closed_shell;
    else if (sf == "single_electron_x2") r.xc.spin_factor = SpinFactor::single_electron_x2;
    else throw ConfigError("functional.spin_factor must be closed_shell or single_electron_x2");
    r.xc.mollify_external = c.get_bool("functional", "mollify", false);
    const std::string pf = c.get("functional", "px_form");
    if (pf == "density_curvature") r.xc.px_form = PxForm::density_curvature;
    else if (pf == "current_force") r.xc.px_form = PxForm::current_force;
    else throw ConfigError("functional.px_form must be density_curvature or current_force");
    const std::string lr = c.get("functional", "lda_route");
    if (lr == "closed_form") r.xc.lda_route = LdaRoute::closed_form;
    else if (lr == "poisson") r.xc.lda_route = LdaRoute::poisson;
    else throw ConfigError("functional.lda_route must be closed_form or poisson");
    r.include_zero_point = c.get_bool("options", "include_zero_point", false);
    r.scf_max_iterations = c.get_int("options", "scf_max_iterations", 3000);

    r.run.dt = c.get_double("dynamics", "dt", 5e-4);
    r.run.t_end = c.get_double("dynamics", "t_end", 1000);
    r.run.damping = c.get_double("dynamics", "damping", 5e-3);
    r.run.sample_stride = c.get_int("dynamics", "stride", 20);
    r.run.omega_min = c.get_double("dynamics", "omega_min", 0.0);
    r.run.omega_max = c.get_double("dynamics", "omega_max", 1.5);
    r.run.omega_points = c.get_int("dynamics", "omega_points", 1501);
    r.kick.strength = c.get_double("dynamics", "kick_strength", 1e-4);
    r.kick.t0 = c.get_double("dynamics", "kick_t0", 1.0);
    r.kick.width = c.get_double("dynamics", "kick_width", 1e-2);
    const std::string hist = c.get("dynamics", "history");
    if (hist == "auxiliary_ode") r.history = HistoryMode::auxiliary_ode;
    else if (hist == "memory_integral") r.history = HistoryMode::memory_integral;
    else throw ConfigError("dynamics.history must be auxiliary_ode or memory_integral");

    auto axis = [&](const std::string& key, std::vector<double>& dst, double base_value) {
      if (c.has("sweep", key)) {
        dst = detail::parse_numbers(c.get("sweep", key), "sweep." + key);
        if (dst.empty()) throw ConfigError("sweep axis '" + key + "' is empty");
      } else {
        dst = {base_value};
      }
    };
    axis("lambda", r.sweep_lambda, r.lambda.value_or(0.0));
    if (c.has("sweep", "omega_range")) {
      if (c.has("sweep", "omega")) throw ConfigError("give either sweep.omega or sweep.omega_range");
      r.sweep_omega = detail::parse_range(c.get("sweep", "omega_range"), "sweep.omega_range");
    } else if (c.get("sweep", "omega") == "resonance") {
      r.sweep_omega_resonance = true;
      r.sweep_omega = {0.0};
    } else {
      axis("omega", r.sweep_omega, r.omega);
      r.sweep_omega_resonance = !c.has("sweep", "omega") && r.omega_resonance;
    }
    axis("softening", r.sweep_softening, r.softening);
    axis("kappa", r.sweep_kappa, r.xc.kappa);
    if (r.ratio && c.has("sweep", "lambda")) throw ConfigError("mode.ratio and sweep.lambda are mutually exclusive");
    r.resolved = c;
    out.push_back(std::move(r));
  }
  return out;
}

// lowest bare excitation energy of the soft-Coulomb atom on the config grid
inline double bare_excitation(const Grid1D& grid, double softening, FdOrder order) {
  auto m = matter_operators(grid, soft_coulomb(grid, softening), order);
  ComplexSparse h = m.kinetic.cast<cplx>() + m.potential;
  auto res = lowest_eigenpairs<cplx>(h, 2, EigenOptions{1e-12});
  return res.values[1] - res.values[0];
}

// Sweep tuples in ascending order. Resonant frequencies are resolved per softening.
inline std::vector<SweepTuple> sweep_points(const RunConfig& r) {
  std::map<double, double> resonance;
  if (r.sweep_omega_resonance) {
    const Grid1D g = r.grid();
    for (double xi : r.sweep_softening) resonance[xi] = bare_excitation(g, xi, r.order);
  }
  std::vector<SweepTuple> pts;
  for (double lam : r.sweep_lambda)
    for (double w : r.sweep_omega)
      for (double xi : r.sweep_softening)
        for (double k : r.sweep_kappa) {
          SweepTuple t{lam, w, xi, k};
          if (r.sweep_omega_resonance) t.omega = resonance.at(xi);
          if (r.ratio) t.lambda = lambda_from_ratio(t.omega, *r.ratio);
          pts.push_back(t);
        }
  std::sort(pts.begin(), pts.end());
  return pts;
}

inline std::vector<CavityMode> modes_for(const RunConfig& r, const SweepTuple& t) {
  return std::vector<CavityMode>(r.mode_count, CavityMode{t.omega, t.lambda, r.polarization});
}

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> info;
  bool ok() const { return errors.empty(); }
  std::string text() const {
    std::ostringstream out;
    for (const auto& e : errors) out << "error: " << e << "\n";
    for (const auto& i : info) out << i << "\n";
    return out.str();
  }
};

enum class Command { ground, spectrum, validate };

inline long long coupled_dimension(const RunConfig& r) {
  long long photons = 1;
  const bool coupled = r.method == Method::exact_pf || r.method == Method::exact_pzw ||
                       (r.method == Method::pheg && r.pheg_potential == PhegPotential::raw);
  if (coupled)
    for (int a = 0; a < r.mode_count; ++a) photons *= (r.max_n + 1);
  return static_cast<long long>(r.grid_points) * photons;
}

inline ValidationReport validate(const std::vector<RunConfig>& jobs, Command cmd = Command::validate) {
  ValidationReport rep;
  std::set<std::string> labels;
  for (const auto& r : jobs) labels.insert(r.label);
  for (const auto& r : jobs) {
    const std::string who = r.label + " (" + to_string(r.method) + ")";
    const bool periodic = r.boundary == Boundary::periodic;
    if (r.method == Method::pheg && !periodic) rep.errors.push_back(who + ": pheg basis requires a periodic grid");
    if ((r.method == Method::exact_pzw || r.method == Method::pzw_selfpol) && periodic)
      rep.errors.push_back(who + ": PZW forms require a dirichlet grid");
    if ((r.method == Method::qedft_px || r.method == Method::qedft_pxlda || r.method == Method::maxwell ||
         r.method == Method::pxlda_maxwell) &&
        periodic)
      rep.errors.push_back(who + ": Kohn-Sham and Maxwell methods require a dirichlet grid");
    if (cmd == Command::spectrum && !is_spectrum_method(r.method))
      rep.errors.push_back(who + ": method has no spectrum mode");
    if (cmd == Command::spectrum && periodic) rep.errors.push_back(who + ": spectra require a dirichlet grid");
    if (r.grid_points < 3 || !(r.grid_spacing > 0)) rep.errors.push_back(who + ": invalid grid");
    if (r.max_n < 0) rep.errors.push_back(who + ": truncation.max_n must be non-negative");
    if (r.mode_count < 1) rep.errors.push_back(who + ": mode.count must be at least 1");
    if (!r.reference.empty() && !labels.count(r.reference))
      rep.errors.push_back(who + ": unknown reference job '" + r.reference + "'");
    if (r.sweep_omega_resonance && periodic)
      rep.errors.push_back(who + ": resonant frequency needs a dirichlet grid");
    if (!(r.run.dt > 0) || !(r.run.t_end > 0) || r.run.sample_stride < 1 || r.run.omega_points < 1)
      rep.errors.push_back(who + ": invalid dynamics settings");

    const long long dim = coupled_dimension(r);
    std::ostringstream line;
    line << who << ": grid " << r.grid_points << " x " << r.grid_spacing << " " << to_string(r.boundary);
    if (dim != r.grid_points) line << ", Fock states " << dim / r.grid_points;
    line << ", dimension " << dim;
    // rough memory: sparse rows plus a Krylov block of 40 vectors
    const double nnz_row = periodic ? r.grid_points + 2.0 * r.mode_count : 5.0 + 2.0 * r.mode_count;
    const double mb = (dim * nnz_row * 16.0 + 40.0 * dim * 16.0) / 1048576.0;
    line << ", estimated memory " << std::fixed << std::setprecision(1) << mb << " MB";
    rep.info.push_back(line.str());

    if (rep.errors.empty()) {
      std::vector<SweepTuple> pts;
      try {
        pts = sweep_points(r);
      } catch (const std::exception& e) {
        rep.errors.push_back(who + ": " + e.what());
      }
      std::ostringstream sw;
      sw << who << ": " << pts.size() << " sweep point" << (pts.size() == 1 ? "" : "s");
      rep.info.push_back(sw.str());
      for (const auto& t : pts) {
        std::ostringstream p;
        const double wt = std::sqrt(t.omega * t.omega + t.lambda * t.lambda * r.mode_count);
        p << "  omega = " << std::setprecision(6) << t.omega << ", lambda = " << t.lambda
          << ", softening = " << t.softening << ", kappa = " << t.kappa << ", dressed omega = " << wt;
        if (r.ratio) p << " (lambda = " << *r.ratio << " * sqrt(2 omega))";
        if (r.method == Method::photon_free && r.mode_count > 0) {
          const ModeSet ms = dress_modes(modes_for(r, t));
          if (!(1.0 - ms.total_mass_shift() > 0)) rep.errors.push_back(who + ": photon-free mass is not positive");
        }
        rep.info.push_back(p.str());
      }
    }
  }
  return rep;
}

// Fixed scientific notation with 12 significant digits.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.11e", v);
  return buf;
}

inline std::string csv_safe(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ' ';
  return s;
}

struct GroundRow {
  SweepTuple p;
  int max_n = 0;
  double energy = std::numeric_limits<double>::quiet_NaN();
  double dipole_variance = std::numeric_limits<double>::quiet_NaN();
  double photon_number = std::numeric_limits<double>::quiet_NaN();
  double deviation = std::numeric_limits<double>::quiet_NaN();
  int scf_iterations = 0;
  std::vector<double> excitation_distribution;
  std::string status = "ok";
};

namespace detail {

inline double density_variance(const Grid1D& g, const RealVector& prob) {
  const RealVector x = g.coordinates();
  const double m = prob.dot(x);
  return prob.dot(x.cwiseProduct(x)) - m * m;
}

}  // namespace detail

inline GroundRow solve_ground_point(const RunConfig& r, const SweepTuple& t) {
  GroundRow row;
  row.p = t;
  row.max_n = r.max_n;
  const Grid1D g = r.grid();
  const Potential1D v = soft_coulomb(g, t.softening);
  const ModeSet ms = dress_modes(modes_for(r, t));
  ExactOptions eo;
  eo.order = r.order;
  eo.include_zero_point = r.include_zero_point;
  const FockTruncation tr{r.max_n};
  switch (r.method) {
    case Method::exact_pf:
    case Method::exact_pzw: {
      CoupledObservables o;
      if (r.method == Method::exact_pf) {
        auto h = build_pf_hamiltonian(g, v, ms, tr, PfForm::dressed_bilinear, eo);
        o = observables(h, ground_state(h, EigenOptions{1e-10}).state);
      } else {
        auto h = build_pzw_hamiltonian(g, v, ms, tr, eo);
        o = observables(h, ground_state(h, EigenOptions{1e-10}).state);
      }
      row.energy = o.energy;
      row.dipole_variance = o.dipole_variance;
      row.photon_number = o.photon_number.empty() ? row.photon_number : o.photon_number[0];
      row.excitation_distribution = o.excitation_distribution;
      break;
    }
    case Method::pzw_selfpol: {
      auto h = build_pzw_selfpol_hamiltonian(g, v, ms, eo);
      auto gs = ground_state(h, EigenOptions{1e-10});
      row.energy = gs.energy;
      row.dipole_variance = detail::density_variance(g, gs.state.cwiseAbs2() / gs.state.squaredNorm());
      break;
    }
    case Method::photon_free: {
      PhotonFreeConfig pc;
      pc.order = r.order;
      pc.include_zero_point = r.include_zero_point;
      auto h = build_static_pf_free_hamiltonian(g, v, ms, pc);
      auto gs = ground_state(h, EigenOptions{1e-10});
      const ComplexVector psi = gs.state.normalized();
      row.energy = gs.energy;
      if (!g.periodic()) row.dipole_variance = detail::density_variance(g, psi.cwiseAbs2());
      row.photon_number = reconstruct_photon_observables(h.matter, psi, ms).photon_number[0];
      break;
    }
    case Method::pheg: {
      PhegOptions po;
      po.potential = r.pheg_potential;
      po.include_zero_point = r.include_zero_point;
      auto h = build_pheg_hamiltonian(g, v, ms, tr, po);
      auto gs = pheg_ground_state(h, EigenOptions{1e-10});
      auto o = pheg_observables(h, gs.state.normalized());
      row.max_n = h.fock.levels() - 1;
      row.energy = gs.energy;
      row.photon_number = o.photon_number[0];
      row.excitation_distribution = o.excitation_distribution;
      break;
    }
    case Method::qedft_px:
    case Method::qedft_pxlda:
    case Method::maxwell:
    case Method::pxlda_maxwell: {
      XcConfig xc = r.xc;
      xc.kappa = t.kappa;
      ScfOptions so;
      so.order = r.order;
      so.include_zero_point = r.include_zero_point;
      so.max_iterations = r.scf_max_iterations;
      KsState ks = scf_solve(g, v, ms, xc, so);
      if (!ks.converged) throw std::runtime_error("SCF did not converge");
      row.energy = ks.energy;
      row.dipole_variance = detail::density_variance(g, ks.density * g.spacing());
      row.scf_iterations = ks.iterations;
      break;
    }
  }
  return row;
}

struct GroundResult {
  RunConfig config;
  std::vector<GroundRow> rows;
  bool all_ok() const {
    return std::all_of(rows.begin(), rows.end(), [](const GroundRow& r) { return r.status == "ok"; });
  }
};

inline GroundResult run_ground(const RunConfig& r, int workers = 0) {
  GroundResult res{r, {}};
  const auto pts = sweep_points(r);
  res.rows.resize(pts.size());
  parallel_for(static_cast<int>(pts.size()), worker_count(workers), [&](int i) {
    try {
      res.rows[i] = solve_ground_point(r, pts[i]);
    } catch (const std::exception& e) {
      res.rows[i] = GroundRow{};
      res.rows[i].p = pts[i];
      res.rows[i].max_n = r.max_n;
      res.rows[i].status = csv_safe(std::string("failed: ") + e.what());
    }
  });
  return res;
}

// fills the deviation column from a reference job's rows with the same parameter tuple
inline void attach_reference(GroundResult& res, const GroundResult& ref) {
  const bool photons = res.config.compare == "photon_number";
  auto value = [&](const GroundRow& r) { return photons ? r.photon_number : r.energy; };
  // kappa only affects the functional, so it is not part of the match
  auto key = [](SweepTuple t) {
    t.kappa = 0;
    return t;
  };
  std::map<SweepTuple, double> e;
  for (const auto& row : ref.rows) e[key(row.p)] = value(row);
  for (auto& row : res.rows) {
    auto it = e.find(key(row.p));
    if (it != e.end()) row.deviation = std::abs(value(row) - it->second);
  }
}

inline std::string header_block(const RunConfig& r, const std::string& kind) {
  std::ostringstream h;
  h << "# qedlab " << kind << " output\n# resolved configuration:\n" << r.resolved.dump("#   ");
  return h.str();
}

inline std::string ground_csv(const GroundResult& res) {
  std::ostringstream out;
  out << header_block(res.config, "ground");
  out << "method,job,lambda,omega,softening,kappa,max_n,energy,dipole_variance,photon_number,deviation,"
         "scf_iterations,excitation_distribution,status\n";
  for (const auto& row : res.rows) {
    out << to_string(res.config.method) << ',' << res.config.label << ',' << fmt(row.p.lambda) << ','
        << fmt(row.p.omega) << ',' << fmt(row.p.softening) << ',' << fmt(row.p.kappa) << ',' << row.max_n << ','
        << fmt(row.energy) << ',' << fmt(row.dipole_variance) << ',' << fmt(row.photon_number) << ','
        << fmt(row.deviation) << ',' << row.scf_iterations << ',';
    for (std::size_t i = 0; i < row.excitation_distribution.size(); ++i)
      out << (i ? ";" : "") << fmt(row.excitation_distribution[i]);
    out << ',' << row.status << '\n';
  }
  return out.str();
}

inline std::string ground_plot(const GroundResult& res, const std::string& csv_name) {
  std::ostringstream p;
  const std::string stem = csv_name.substr(0, csv_name.rfind('.'));
  std::set<double> omegas;
  for (const auto& row : res.rows) omegas.insert(row.p.omega);
  const bool dev = !res.config.reference.empty();
  p << "# gnuplot script\nset datafile separator ','\nset datafile commentschars '#'\n"
    << "set terminal pngcairo size 1200,500\nset output '" << stem << ".png'\n"
    << "set multiplot layout 1,2\nset xlabel 'lambda'\nset key outside\n";
  auto panel = [&](const std::string& title, int col, bool logy) {
    p << "set title '" << title << "'\n" << (logy ? "set logscale y\n" : "unset logscale y\n") << "plot";
    bool first = true;
    for (double w : omegas) {
      p << (first ? " " : ", \\\n     ") << "'" << csv_name << "' skip 1 using 3:(abs($4-" << fmt(w)
        << ")<1e-9 ? $" << col << " : 1/0) with linespoints title 'omega=" << w << "'";
      first = false;
    }
    p << "\n";
  };
  panel("dipole variance", 9, false);
  if (dev) panel(res.config.compare == "energy" ? "|E - E_ref|" : "|N - N_ref|", 11, true);
  else panel("energy", 8, false);
  p << "unset multiplot\n";
  return p.str();
}

struct SpectrumJobResult {
  RunConfig config;
  SpectrumMap map;
};

inline SpectrumJobResult run_spectrum(const RunConfig& r, int workers = 0) {
  SpectrumJobResult out{r, {}};
  SpectrumSystem sys = SpectrumSystem::exact_pzw;
  switch (r.method) {
    case Method::exact_pf: sys = SpectrumSystem::exact_pf; break;
    case Method::exact_pzw: sys = SpectrumSystem::exact_pzw; break;
    case Method::photon_free: sys = SpectrumSystem::photon_free; break;
    case Method::maxwell: sys = SpectrumSystem::maxwell_classical; break;
    case Method::pxlda_maxwell: sys = SpectrumSystem::pxlda_maxwell; break;
    default: throw ConfigError(to_string(r.method) + " has no spectrum mode");
  }
  SpectrumParams p;
  p.grid = r.grid();
  p.softening = r.softening;
  p.truncation = {r.max_n};
  p.order = r.order;
  p.history = r.history;
  p.xc = r.xc;
  const auto pts = sweep_points(r);
  if (!pts.empty()) p.softening = pts.front().softening;
  std::vector<double> omegas;
  for (const auto& t : pts) omegas.push_back(t.omega);
  omegas.erase(std::unique(omegas.begin(), omegas.end()), omegas.end());
  if (r.ratio) {
    out.map = spectrum_sweep(sys, omegas, *r.ratio, p, r.kick, r.run, workers);
  } else {
    // explicit lambda: one run per (lambda, omega)
    SpectrumMap m;
    m.omega = r.run.omega_axis();
    m.points.resize(pts.size());
    parallel_for(static_cast<int>(pts.size()), worker_count(workers), [&](int i) {
      SweepPoint& sp = m.points[i];
      sp.omega_mode = pts[i].omega;
      sp.lambda = pts[i].lambda;
      SpectrumParams q = p;
      q.softening = pts[i].softening;
      q.modes = modes_for(r, pts[i]);
      try {
        sp.result = kick_and_spectrum(sys, q, r.kick, r.run);
        sp.ok = true;
        sp.status = "ok";
      } catch (const std::exception& e) {
        sp.status = std::string("failed: ") + e.what();
      }
    });
    out.map = std::move(m);
  }
  for (auto& sp : out.map.points) sp.status = csv_safe(sp.status);
  return out;
}

// dense matrix: first column the spectral frequency, one column per cavity frequency
inline std::string spectrum_csv(const SpectrumJobResult& res) {
  std::ostringstream out;
  out << header_block(res.config, "spectrum");
  out << "omega";
  for (const auto& p : res.map.points) out << ',' << fmt(p.omega_mode);
  out << '\n';
  for (std::size_t k = 0; k < res.map.omega.size(); ++k) {
    out << fmt(res.map.omega[k]);
    for (const auto& p : res.map.points)
      out << ',' << fmt(p.ok ? p.result.spectrum.amplitude[k] : std::numeric_limits<double>::quiet_NaN());
    out << '\n';
  }
  return out.str();
}

inline std::string spectrum_points_csv(const SpectrumJobResult& res) {
  std::ostringstream out;
  out << header_block(res.config, "spectrum sweep point");
  out << "method,job,omega_mode,lambda,ground_energy,max_norm_drift,max_energy_drift,peak_1,peak_2,peak_3,status\n";
  for (const auto& p : res.map.points) {
    out << to_string(res.config.method) << ',' << res.config.label << ',' << fmt(p.omega_mode) << ','
        << fmt(p.lambda) << ',';
    if (p.ok) {
      out << fmt(p.result.ground_energy) << ',' << fmt(p.result.max_norm_drift) << ','
          << fmt(p.result.max_energy_drift);
      auto peaks = dominant_peaks(p.result.spectrum, 3);
      for (int i = 0; i < 3; ++i)
        out << ',' << fmt(i < static_cast<int>(peaks.size()) ? peaks[i].omega : std::nan(""));
    } else {
      for (int i = 0; i < 6; ++i) out << ",nan";
    }
    out << ',' << p.status << '\n';
  }
  return out.str();
}

inline std::string spectrum_plot(const SpectrumJobResult& res, const std::string& csv_name) {
  std::ostringstream p;
  const std::string stem = csv_name.substr(0, csv_name.rfind('.'));
  const auto& pts = res.map.points;
  const double x0 = pts.empty() ? 0.0 : pts.front().omega_mode;
  const double dx = pts.size() > 1 ? (pts.back().omega_mode - x0) / (pts.size() - 1.0) : 1.0;
  const auto& w = res.map.omega;
  const double y0 = w.empty() ? 0.0 : w.front();
  const double dy = w.size() > 1 ? (w.back() - y0) / (w.size() - 1.0) : 1.0;
  p << "# gnuplot script; the cavity axis is drawn uniform between its end points\n"
    << "set datafile separator ','\nset datafile commentschars '#'\n"
    << "set terminal pngcairo size 700,600\nset output '" << stem << ".png'\n"
    << "set xlabel 'cavity frequency'\nset ylabel 'omega'\nset cblabel 'log10 |d(omega)|'\n"
    << "set palette defined (0 'white', 1 'blue', 2 'black')\n"
    << "set title '" << res.config.label << "'\n"
    << "plot '" << csv_name << "' matrix rowheaders columnheaders using (" << fmt(x0) << "+$1*" << fmt(dx) << "):("
    << fmt(y0) << "+$2*" << fmt(dy) << "):(log10($3+1e-12)) with image notitle\n";
  return p.str();
}

}  // namespace qedlab
