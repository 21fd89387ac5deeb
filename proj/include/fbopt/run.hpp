#pragma once

#include <iosfwd>
#include <string>

#include "fbopt/config.hpp"

namespace fbopt {

struct RunSummary {
  double cost = 0.0;
  double relgrad = 0.0;  // NaN when the command computes no gradient
  double wall_seconds = 0.0;
  bool ok = true;
  std::string note;

  /// `J=<cost> relgrad=<relgrad> wall=<seconds>s[ <note>]`
  std::string line() const;
};

/// Executes the configured command and writes its CSVs under `cfg.output`:
/// snapshots/snapshot_<n>.csv every `snapshot_stride` steps and at the end, plus
/// convergence.csv and control.csv (optimise), gradient.csv (adjoint), gradcheck.csv
/// (gradcheck) or shapecalc.csv (suite). `ok` is false when suite rows fail.
RunSummary run(const RunConfig& cfg);

}  // namespace fbopt
