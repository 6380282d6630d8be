// Physical constants and frequency-unit conventions.
//
// All frequencies inside the toolkit are angular (rad/s). Configuration and
// data files quote frequencies in ordinary Hz; hz_to_angular applies the 2*pi.

#pragma once

#include <numbers>

namespace kzmsim {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// CODATA values, SI units
inline constexpr double kHbar = 1.054571817e-34;          // J s
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kCoulombConstant = 8.9875517923e9;    // N m^2 / C^2  (1/4 pi eps0)
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;  // kg

inline constexpr double kYb171MassKg = 170.9363302 * kAtomicMassUnit;

constexpr double hz_to_angular(double f_hz) { return kTwoPi * f_hz; }
constexpr double angular_to_hz(double w) { return w / kTwoPi; }

}  // namespace kzmsim
