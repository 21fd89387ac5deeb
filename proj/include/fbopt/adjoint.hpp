#pragma once

namespace fbopt {

/// Which backward system an adjoint sweep solves.
enum class AdjointScheme {
  discrete,    // transpose of the implemented forward map, including position sensitivities
  identified,  // the continuous adjoint equations discretised on the stored clouds
};

struct AdjointOptions {
  AdjointScheme scheme = AdjointScheme::discrete;
  /// Keeps the sensitivities with respect to point positions (domain variation). Turning it
  /// off leaves only the state-to-state terms.
  bool domain_variation = true;
};

}  // namespace fbopt
