#include "fbopt/config.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "fbopt/errors.hpp"

namespace fbopt {

namespace {

using Values = std::vector<std::string>;

struct Key {
  std::string section;
  std::string name;
  std::string type;
  std::function<void(RunConfig&, const Values&)> set;
  std::function<std::string(const RunConfig&)> show;

  std::string full() const { return section + "." + name; }
};

std::string show_number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string show_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + show_number(v[i]);
  return s;
}

[[noreturn]] void bad_value(const Key& k, const RunConfig& defaults, const std::string& got) {
  throw ConfigError("key " + k.full() + " expects " + k.type + " (default " + k.show(defaults) + "), got '" + got +
                    "'");
}

std::string joined(const Values& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

template <class Get>
Key number(std::string section, std::string name, Get get) {
  Key k{std::move(section), std::move(name), "a number", {}, {}};
  k.show = [get](const RunConfig& c) { return show_number(get(c)); };
  k.set = [get, k](RunConfig& c, const Values& v) {
    double x = 0.0;
    if (v.size() != 1 || !parse_double(v[0], x)) bad_value(k, RunConfig{}, joined(v));
    get(c) = x;
  };
  return k;
}

template <class Get>
Key integer(std::string section, std::string name, Get get) {
  Key k{std::move(section), std::move(name), "an integer", {}, {}};
  k.show = [get](const RunConfig& c) { return std::to_string(get(c)); };
  k.set = [get, k](RunConfig& c, const Values& v) {
    int x = 0;
    if (v.size() != 1) bad_value(k, RunConfig{}, joined(v));
    const auto r = std::from_chars(v[0].data(), v[0].data() + v[0].size(), x);
    if (r.ec != std::errc() || r.ptr != v[0].data() + v[0].size()) bad_value(k, RunConfig{}, joined(v));
    get(c) = x;
  };
  return k;
}

template <class Get>
Key boolean(std::string section, std::string name, Get get) {
  Key k{std::move(section), std::move(name), "true or false", {}, {}};
  k.show = [get](const RunConfig& c) { return std::string(get(c) ? "true" : "false"); };
  k.set = [get, k](RunConfig& c, const Values& v) {
    if (v.size() == 1 && (v[0] == "true" || v[0] == "1")) {
      get(c) = true;
    } else if (v.size() == 1 && (v[0] == "false" || v[0] == "0")) {
      get(c) = false;
    } else {
      bad_value(k, RunConfig{}, joined(v));
    }
  };
  return k;
}

template <class Get>
Key choice(std::string section, std::string name, std::vector<std::string> options, Get get) {
  std::string type = "one of";
  for (const auto& o : options) type += " " + o;
  Key k{std::move(section), std::move(name), type, {}, {}};
  k.show = [get](const RunConfig& c) { return std::string(get(c)); };
  k.set = [get, k, options](RunConfig& c, const Values& v) {
    if (v.size() != 1 || std::find(options.begin(), options.end(), v[0]) == options.end()) {
      bad_value(k, RunConfig{}, joined(v));
    }
    get(c) = v[0];
  };
  return k;
}

template <class Get>
Key text(std::string section, std::string name, Get get) {
  Key k{std::move(section), std::move(name), "a string", {}, {}};
  k.show = [get](const RunConfig& c) { return std::string(get(c)); };
  k.set = [get, k](RunConfig& c, const Values& v) {
    if (v.size() != 1 || v[0].empty()) bad_value(k, RunConfig{}, joined(v));
    get(c) = v[0];
  };
  return k;
}

template <class Get>
Key number_list(std::string section, std::string name, Get get) {
  Key k{std::move(section), std::move(name), "a list of numbers", {}, {}};
  k.show = [get](const RunConfig& c) { return show_list(get(c)); };
  k.set = [get, k](RunConfig& c, const Values& v) {
    std::vector<double> out;
    for (const std::string& item : v) {
      std::string token;
      std::istringstream in(item);
      while (std::getline(in, token, ',')) {
        token.erase(0, token.find_first_not_of(" \t"));
        token.erase(token.find_last_not_of(" \t") + 1);
        if (token.empty()) continue;
        double x = 0.0;
        if (!parse_double(token, x)) bad_value(k, RunConfig{}, joined(v));
        out.push_back(x);
      }
    }
    if (out.empty()) bad_value(k, RunConfig{}, joined(v));
    get(c) = std::move(out);
  };
  return k;
}

// Member accessors usable on const and non-const configs.
#define FBOPT_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Key>& schema() {
  static const std::vector<Key> keys = {
      choice("run", "problem", {"stefan", "navier_stokes", "verify"}, FBOPT_FIELD(problem)),
      choice("run", "command", {"forward", "adjoint", "gradcheck", "optimise", "suite"}, FBOPT_FIELD(command)),
      text("run", "output", FBOPT_FIELD(output)),
      integer("run", "snapshot_stride", FBOPT_FIELD(snapshot_stride)),

      number("stefan", "alpha", FBOPT_FIELD(stefan.alpha)),
      number("stefan", "beta", FBOPT_FIELD(stefan.beta)),
      number("stefan", "kappa", FBOPT_FIELD(stefan.kappa)),
      number("stefan", "theta_m", FBOPT_FIELD(stefan.theta_m)),
      number("stefan", "a", FBOPT_FIELD(stefan.a)),
      number("stefan", "b", FBOPT_FIELD(stefan.b)),
      number("stefan", "tau", FBOPT_FIELD(stefan.tau)),
      number("stefan", "t_final", FBOPT_FIELD(stefan.t_final)),
      number("stefan", "chi_decay", FBOPT_FIELD(stefan.chi_decay)),
      number_list("stefan", "chi_grid", FBOPT_FIELD(stefan.chi_grid)),
      number("stefan", "initial_edge", FBOPT_FIELD(stefan.initial_edge)),
      number("stefan", "spacing", FBOPT_FIELD(stefan.spacing)),
      number("stefan", "theta0", FBOPT_FIELD(stefan.theta0)),
      number("stefan", "control", FBOPT_FIELD(stefan_control)),

      number("navier_stokes", "nu", FBOPT_FIELD(navier_stokes.nu)),
      number("navier_stokes", "sigma", FBOPT_FIELD(navier_stokes.sigma)),
      number("navier_stokes", "u_max", FBOPT_FIELD(navier_stokes.u_max)),
      number("navier_stokes", "tau", FBOPT_FIELD(navier_stokes.tau)),
      number("navier_stokes", "t_final", FBOPT_FIELD(navier_stokes.t_final)),
      number("navier_stokes", "spacing", FBOPT_FIELD(navier_stokes.spacing)),
      number("navier_stokes", "control", FBOPT_FIELD(navier_stokes_control)),

      number("optim", "tol_rel", FBOPT_FIELD(optim.tol_rel)),
      integer("optim", "max_iter", FBOPT_FIELD(optim.max_iter)),
      number("optim", "abs_floor", FBOPT_FIELD(optim.abs_floor)),
      number("optim", "initial_step", FBOPT_FIELD(optim.armijo.initial_step)),
      number("optim", "contraction", FBOPT_FIELD(optim.armijo.contraction)),
      number("optim", "slope", FBOPT_FIELD(optim.armijo.slope)),
      integer("optim", "max_halvings", FBOPT_FIELD(optim.armijo.max_halvings)),
      choice("optim", "expand", {"auto", "on", "off"}, FBOPT_FIELD(expand)),

      {"adjoint", "scheme", "one of discrete identified",
       [](RunConfig& c, const Values& v) {
         if (v.size() == 1 && v[0] == "discrete") {
           c.adjoint.scheme = AdjointScheme::discrete;
         } else if (v.size() == 1 && v[0] == "identified") {
           c.adjoint.scheme = AdjointScheme::identified;
         } else {
           throw ConfigError("key adjoint.scheme expects one of discrete identified (default discrete), got '" +
                             joined(v) + "'");
         }
       },
       [](const RunConfig& c) {
         return std::string(c.adjoint.scheme == AdjointScheme::identified ? "identified" : "discrete");
       }},
      boolean("adjoint", "domain_variation", FBOPT_FIELD(adjoint.domain_variation)),

      integer("gradcheck", "directions", FBOPT_FIELD(gradcheck.directions)),
      number_list("gradcheck", "h", FBOPT_FIELD(gradcheck.h_list)),
      {"gradcheck", "seed", "an integer",
       [](RunConfig& c, const Values& v) {
         std::uint64_t x = 0;
         if (v.size() != 1 ||
             std::from_chars(v[0].data(), v[0].data() + v[0].size(), x).ptr != v[0].data() + v[0].size()) {
           throw ConfigError("key gradcheck.seed expects an integer (default 7), got '" + joined(v) + "'");
         }
         c.gradcheck.seed = x;
       },
       [](const RunConfig& c) { return std::to_string(c.gradcheck.seed); }},
      number("gradcheck", "perturb", FBOPT_FIELD(gradcheck_perturb)),

      number_list("suite", "spacings", FBOPT_FIELD(suite.spacings)),
      number_list("suite", "taus", FBOPT_FIELD(suite.taus)),
      number_list("suite", "pushforward_taus", FBOPT_FIELD(suite.pushforward_taus)),
      boolean("suite", "boundary_term", FBOPT_FIELD(suite.boundary_term)),
      integer("suite", "stefan_directions", FBOPT_FIELD(suite.stefan_directions)),
  };
  return keys;
}

#undef FBOPT_FIELD

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

[[noreturn]] void unknown_key(const std::string& full) {
  const Key* best = nullptr;
  std::size_t best_d = 4;
  for (const Key& k : schema()) {
    const std::size_t d = edit_distance(full, k.full());
    if (d < best_d) {
      best_d = d;
      best = &k;
    }
  }
  std::string msg = "unknown key " + full;
  if (best) {
    msg += " (did you mean " + best->full() + ", " + best->type + ", default " + best->show(RunConfig{}) + "?)";
  }
  throw ConfigError(msg);
}

void assign(RunConfig& cfg, const std::string& section, const std::string& name, const Values& values) {
  for (const Key& k : schema()) {
    if (k.section == section && k.name == name) {
      k.set(cfg, values);
      return;
    }
  }
  unknown_key(section + "." + name);
}

}  // namespace

bool RunConfig::expand_steps() const {
  if (expand == "on") return true;
  if (expand == "off") return false;
  return problem == "navier_stokes";
}

void RunConfig::validate() const {
  if (snapshot_stride < 1) throw ConfigError("key run.snapshot_stride must be at least 1");
  if (problem == "verify" && command != "suite") {
    throw ConfigError("key run.command: problem verify only supports suite, got " + command);
  }
  if (problem != "verify" && command == "suite") {
    throw ConfigError("key run.command: suite needs run.problem = verify");
  }
  stefan.validate();
  navier_stokes.validate();
  if (!(optim.tol_rel > 0.0)) throw ConfigError("key optim.tol_rel must be positive");
  if (optim.max_iter < 0) throw ConfigError("key optim.max_iter must be non-negative");
  if (!(optim.armijo.initial_step > 0.0)) throw ConfigError("key optim.initial_step must be positive");
  if (!(optim.armijo.contraction > 0.0 && optim.armijo.contraction < 1.0)) {
    throw ConfigError("key optim.contraction must lie in (0, 1)");
  }
  if (!(optim.armijo.slope > 0.0 && optim.armijo.slope < 1.0)) throw ConfigError("key optim.slope must lie in (0, 1)");
  if (optim.armijo.max_halvings < 0) throw ConfigError("key optim.max_halvings must be non-negative");
  if (gradcheck.directions < 1) throw ConfigError("key gradcheck.directions must be at least 1");
  for (double h : gradcheck.h_list) {
    if (!(h > 0.0)) throw ConfigError("key gradcheck.h entries must be positive");
  }
  for (double t : suite.taus) {
    if (!(t > 0.0)) throw ConfigError("key suite.taus entries must be positive");
  }
  for (double t : suite.pushforward_taus) {
    if (!(t > 0.0)) throw ConfigError("key suite.pushforward_taus entries must be positive");
  }
  for (double h : suite.spacings) {
    if (!(h > 0.0)) throw ConfigError("key suite.spacings entries must be positive");
  }
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form section.key=value");
  }
  const std::string section(assignment.substr(0, dot));
  const std::string name(assignment.substr(dot + 1, eq - dot - 1));
  assign(cfg, section, name, {std::string(assignment.substr(eq + 1))});
}

RunConfig parse_config_text(std::string_view text, std::span<const std::string> overrides) {
  std::istringstream in{std::string(text)};
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI().from_config(in);
  } catch (const CLI::Error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  RunConfig cfg;
  for (const CLI::ConfigItem& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (item.parents.size() != 1) {
      throw ConfigError("key " + item.name + " must sit in exactly one [section]");
    }
    assign(cfg, item.parents[0], item.name, item.inputs);
  }
  for (const std::string& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), overrides);
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const Key& k : schema()) {
    if (k.section != section) {
      out += (section.empty() ? "" : "\n") + ("[" + k.section + "]\n");
      section = k.section;
    }
    out += k.name + " = " + k.show(cfg) + "\n";
  }
  return out;
}

}  // namespace fbopt
