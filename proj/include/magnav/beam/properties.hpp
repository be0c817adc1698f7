#pragma once

// Tube cross-section and material data for the continuum robot.

#include "magnav/core.hpp"

#include <stdexcept>

namespace magnav::beam {

struct BeamProperties {
  double youngs_modulus = 0.0;   // Pa
  double shear_modulus = 0.0;    // Pa
  double outer_diameter = 0.0;   // m
  double inner_diameter = 0.0;   // m
  double density = 0.0;          // kg/m^3

  double area() const {
    const double D = outer_diameter, d = inner_diameter;
    return kPi * (D * D - d * d) / 4.0;
  }
  double bending_inertia() const {
    const double D = outer_diameter, d = inner_diameter;
    return kPi * (D * D * D * D - d * d * d * d) / 64.0;
  }
  double polar_inertia() const { return 2.0 * bending_inertia(); }

  void validate() const {
    if (!(youngs_modulus > 0.0))
      throw std::invalid_argument("beam: Young's modulus must be positive");
    if (!(inner_diameter >= 0.0 && inner_diameter < outer_diameter))
      throw std::invalid_argument(
          "beam: need 0 <= inner diameter < outer diameter");
  }
};

}  // namespace magnav::beam
