#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fbopt/adjoint.hpp"
#include "fbopt/navier_stokes.hpp"
#include "fbopt/optim.hpp"
#include "fbopt/stefan.hpp"
#include "fbopt/verify.hpp"

namespace fbopt {

/// Everything one `run` needs. Keys map to `section.name` in the INI file.
struct RunConfig {
  std::string problem = "stefan";     // stefan | navier_stokes | verify
  std::string command = "optimise";   // forward | adjoint | gradcheck | optimise | suite
  std::string output = "out";
  int snapshot_stride = 10;

  stefan::Config stefan{};
  double stefan_control = 0.0;  // initial value of every control entry
  navier_stokes::Config navier_stokes{};
  double navier_stokes_control = 0.0;

  OptimiseOptions optim{};
  std::string expand = "auto";  // auto | on | off; auto expands for navier_stokes only

  AdjointOptions adjoint{};

  verify::GradCheckOptions gradcheck{};
  double gradcheck_perturb = 0.0;  // uniform random offset added to the control before checking

  verify::SuiteOptions suite{};

  /// Resolved expansion flag for the configured problem.
  bool expand_steps() const;
  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Parses INI text. Unknown keys, keys outside a section and ill-typed values throw
/// ConfigError with the key, its expected type and its default.
RunConfig parse_config_text(std::string_view text, std::span<const std::string> overrides = {});
RunConfig parse_config(const std::string& path, std::span<const std::string> overrides = {});

/// Applies one `section.key=value` override.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Writes every key with its resolved value, in INI form.
std::string dump_config(const RunConfig& cfg);

}  // namespace fbopt
