#pragma once

#include "hilsim/math.hpp"

namespace hil {

inline constexpr double kEarthRadius = 6371000.0;
inline constexpr double kFlatEarthLimit = 50000.0;

struct GeoOrigin {
  double latitude = 0.0;   // deg
  double longitude = 0.0;  // deg
  double altitude_msl = 0.0;

  void validate() const;
};

struct Geodetic {
  double latitude = 0.0;
  double longitude = 0.0;
  double altitude = 0.0;  // m MSL
};

// Equirectangular (flat-earth) mapping anchored at `origin`. Both directions
// throw OutOfFlatEarthRange when the horizontal offset exceeds 50 km.
Geodetic ned_to_geodetic(const Ned& position, const GeoOrigin& origin);
Ned geodetic_to_ned(const Geodetic& point, const GeoOrigin& origin);

}  // namespace hil
