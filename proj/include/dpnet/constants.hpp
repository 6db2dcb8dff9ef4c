#pragma once

#include <string>

namespace dpnet::constants {

// CODATA 2018. All unit conversions used by the pipeline live here so that
// field/mixing conversions have a single auditable source.

// Planck constant in eV s (exact: 6.62607015e-34 J s / 1.602176634e-19 C).
inline constexpr double kPlanckEvS = 4.135667696923859e-15;

// hbar*c in eV m (197.3269804 MeV fm).
inline constexpr double kHbarCEvM = 197.3269804e-9;

// Speed of light in m/s (exact).
inline constexpr double kSpeedOfLightMS = 299792458.0;

// Vacuum permeability in N/A^2.
inline constexpr double kMu0 = 1.25663706212e-6;

// 1 eV in joules (exact).
inline constexpr double kJoulePerEv = 1.602176634e-19;

// 1 m^-1 expressed in eV (natural units, hbar = c = 1).
inline constexpr double kInverseMeterEv = kHbarCEvM;  // 1.973e-7 eV per m^-1

// 1 GeV/cm^3 expressed in eV^4: 1e9 eV * 1e6 m^-3 * (hbar c)^3.
double gev_per_cm3_in_ev4();

// 1 tesla expressed in eV^2 (Heaviside-Lorentz natural units):
// B_nat = B_SI * sqrt((1/mu0) * (1 eV/J)^-1 ... ) computed from first
// principles as sqrt(2 u_nat) with u = B^2/(2 mu0).  ~195.35 eV^2/T.
double tesla_in_ev2();

// Wall-adjacent field amplitude per unit kinetic mixing, at a dark-photon
// frequency of 10 Hz and a 1 m shield edge, in tesla.  Derivable from the
// constants above together with the local halo density (see
// physics::rms_potential_ev); pinned here to 3 significant figures as the
// published coefficient the conversions are normalized to.
inline constexpr double kWallFieldCoeffTesla = 1.63e-12;
inline constexpr double kWallFieldRefFreqHz = 10.0;
inline constexpr double kWallFieldRefEdgeM = 1.0;

// Default local dark-matter energy density in GeV/cm^3.
inline constexpr double kDefaultHaloDensityGevCm3 = 0.45;

// JSON dump of the table with provenance notes (CLI `constants`).
std::string constants_json();

}  // namespace dpnet::constants
