#include "clrm/geostat/variogram.hpp"

#include <cmath>

#include "clrm/common/errors.hpp"

namespace clrm::geostat {
namespace {

double unit_range_correlation(double r, VariogramKind kind) {
  if (kind == VariogramKind::exponential) return std::exp(-3.0 * r);
  if (r >= 1.0) return 0.0;
  return 1.0 - 1.5 * r + 0.5 * r * r * r;
}

}  // namespace

std::string to_string(VariogramKind kind) {
  return kind == VariogramKind::exponential ? "exponential" : "spherical";
}

VariogramKind variogram_kind_from_string(const std::string& text) {
  if (text == "exponential") return VariogramKind::exponential;
  if (text == "spherical") return VariogramKind::spherical;
  throw ArgumentError("unknown variogram kind '" + text + "'");
}

void VariogramModel::validate(bool three_d) const {
  if (!(horizontal_range > 0)) throw ArgumentError("variogram: horizontal_range must be > 0");
  if (three_d && !(vertical_range > 0)) throw ArgumentError("variogram: vertical_range must be > 0 for 3D grids");
}

double covariance(double h, const VariogramModel& model) {
  if (h < 0) throw ArgumentError("covariance: negative separation " + std::to_string(h));
  if (h == 0) return 1.0;
  return unit_range_correlation(h / model.horizontal_range, model.kind);
}

double covariance(double hx, double hy, double hz, const VariogramModel& model) {
  const double ah = model.horizontal_range;
  double r2 = (hx * hx + hy * hy) / (ah * ah);
  if (hz != 0) r2 += hz * hz / (model.vertical_range * model.vertical_range);
  if (r2 == 0) return 1.0;
  return unit_range_correlation(std::sqrt(r2), model.kind);
}

}  // namespace clrm::geostat
