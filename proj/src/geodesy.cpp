#include "hilsim/geodesy.hpp"

#include <cmath>
#include <string>

#include "hilsim/error.hpp"

namespace hil {

void GeoOrigin::validate() const {
  if (!(std::abs(latitude) <= 90.0) || !(std::abs(longitude) <= 180.0) ||
      !std::isfinite(altitude_msl)) {
    throw Error(ErrorCode::InvalidConfig, "origin latitude/longitude out of range");
  }
}

namespace {

void check_range(double north, double east) {
  const double r = std::hypot(north, east);
  if (!(r <= kFlatEarthLimit)) {
    throw Error(ErrorCode::OutOfFlatEarthRange,
                "horizontal offset " + std::to_string(r) + " m exceeds 50 km");
  }
}

}  // namespace

Geodetic ned_to_geodetic(const Ned& position, const GeoOrigin& origin) {
  check_range(position.north, position.east);
  const double cos_lat0 = std::cos(origin.latitude * kDegToRad);
  return {
      origin.latitude + position.north / kEarthRadius * kRadToDeg,
      origin.longitude + position.east / (kEarthRadius * cos_lat0) * kRadToDeg,
      origin.altitude_msl - position.down,
  };
}

Ned geodetic_to_ned(const Geodetic& point, const GeoOrigin& origin) {
  const double cos_lat0 = std::cos(origin.latitude * kDegToRad);
  Ned ned{
      (point.latitude - origin.latitude) * kDegToRad * kEarthRadius,
      (point.longitude - origin.longitude) * kDegToRad * kEarthRadius * cos_lat0,
      origin.altitude_msl - point.altitude,
  };
  check_range(ned.north, ned.east);
  return ned;
}

}  // namespace hil
