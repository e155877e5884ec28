#pragma once

#include <Eigen/Dense>

namespace gridcert {

/// Absolute rotor/load angles (all n buses, canonical order) plus generator
/// angular velocities (first m buses). Deviation coordinates are formed only
/// relative to a declared equilibrium.
struct State {
  Eigen::VectorXd angles;      // n, radians
  Eigen::VectorXd velocities;  // m, rad/s

  bool finite() const {
    return angles.allFinite() && velocities.allFinite();
  }
};

}  // namespace gridcert
