#pragma once

#include <string>

namespace clrm::geostat {

enum class VariogramKind { exponential, spherical };

std::string to_string(VariogramKind kind);
VariogramKind variogram_kind_from_string(const std::string& text);

/// Isotropic horizontal variogram with an optional vertical range, both in grid blocks.
struct VariogramModel {
  VariogramKind kind = VariogramKind::exponential;
  double horizontal_range = 20.0;
  double vertical_range = 3.0;  ///< only used for 3D grids

  void validate(bool three_d) const;
};

/// Correlation at separation h (blocks) for the model's horizontal range.
/// Exponential uses the practical-range form exp(-3h/a).
double covariance(double h, const VariogramModel& model);

/// Correlation for a lag given in blocks along each axis, using the vertical
/// range for the z component.
double covariance(double hx, double hy, double hz, const VariogramModel& model);

}  // namespace clrm::geostat
