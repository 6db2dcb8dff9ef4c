#pragma once

#include <array>
#include <cstdint>

namespace dpnet {

// Standard-halo coherence parameters.
struct HaloModel {
  double local_density_gev_cm3 = 0.45;
  double velocity_dispersion = 1e-3;   // fraction of c
  double quality_factor = 1e6;         // = velocity_dispersion^-2

  void validate() const;
};

// One shield room as seen by one sensor: cube edge plus the projection of
// the wall-tangential field onto the sensor's sensitive axis.
struct ShieldGeometry {
  double edge_length_m = 2.0;
  double coupling_factor = 1.0;  // in (0, 1]; 1 = on-wall, axis tangential

  void validate() const;
};

// One coherent dark-photon tone.
struct DpdmParams {
  double frequency_hz = 0.0;
  double mass_ev = 0.0;  // = h * frequency_hz, kept consistent
  double epsilon = 0.0;
  std::array<double, 3> polarization{0.0, 1.0, 0.0};
  double phase_rad = 0.0;
  double amplitude_scale = 1.0;  // Rayleigh draw; 1 = rms convention

  static DpdmParams from_frequency(double frequency_hz, double epsilon,
                                   double phase_rad = 0.0,
                                   double amplitude_scale = 1.0);
  void validate() const;
};

struct CoherenceProperties {
  double time_s = 0.0;
  double length_m = 0.0;
};

// h * f.  Throws std::domain_error for f <= 0.
double freq_to_mass_ev(double frequency_hz);
// m / h.  Throws std::domain_error for m <= 0.
double mass_to_freq_hz(double mass_ev);

// Coherence time Q/f and coherence length hbar*c / (m * v).
CoherenceProperties coherence_properties(double frequency_hz,
                                         const HaloModel& halo = {});

// Wall-adjacent field amplitude: coeff * eps * (f/10 Hz) * (edge/1 m) * coupling.
double wall_field_amplitude_t(double epsilon, double frequency_hz,
                              const ShieldGeometry& geom);

// Exact inverse of wall_field_amplitude_t.  Throws std::domain_error when the
// geometry is signal-blind (zero coupling).
double epsilon_from_field(double field_t, double frequency_hz,
                          const ShieldGeometry& geom);

// rms gauge-potential amplitude sqrt(2 rho)/m in natural units (eV).
double rms_potential_ev(double mass_ev, const HaloModel& halo = {});

// Wall field derived from first principles (rms potential, natural-unit
// conversions, single-axis projection) instead of the pinned coefficient.
// Used to cross-check kWallFieldCoeffTesla; agreement is required to 5%.
double wall_field_from_first_principles_t(double epsilon, double frequency_hz,
                                          const ShieldGeometry& geom,
                                          const HaloModel& halo = {});

}  // namespace dpnet
