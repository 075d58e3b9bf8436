#pragma once

#include <string>

#include "poquim/rng.hpp"

namespace poquim {

/// Random-effect / error law, centered to mean zero and scaled to the
/// target variance. The normal mixture puts probability 1-rho on
/// N(mu1, 1) and rho on N(mu2, 1) before centering and scaling.
struct DistributionSpec {
  enum class Family { normal, double_exponential, centered_exponential, normal_mixture };
  Family family = Family::normal;
  double mu1 = 0.0;   // mixture only
  double mu2 = 0.0;   // mixture only
  double rho = 0.5;   // mixture only
  double target_variance = 1.0;

  void validate() const;
  static DistributionSpec parse(const std::string& name, double target_variance);
  std::string name() const;
};

/// One draw from the centered, scaled law.
double draw(const DistributionSpec& spec, Rng& rng);

}  // namespace poquim
