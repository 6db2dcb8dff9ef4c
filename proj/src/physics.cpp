#include "dpnet/physics.hpp"

#include <cmath>
#include <stdexcept>

#include "dpnet/constants.hpp"

namespace dpnet {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::domain_error(msg);
}

}  // namespace

void HaloModel::validate() const {
  require(local_density_gev_cm3 > 0, "halo: local_density must be > 0");
  require(velocity_dispersion > 0 && velocity_dispersion < 1,
          "halo: velocity_dispersion must be in (0, 1)");
  const double expected_q = 1.0 / (velocity_dispersion * velocity_dispersion);
  require(std::abs(quality_factor - expected_q) <= 0.01 * expected_q,
          "halo: quality_factor must equal velocity_dispersion^-2 within 1%");
}

void ShieldGeometry::validate() const {
  require(edge_length_m > 0, "shield: edge_length must be > 0");
  require(coupling_factor > 0 && coupling_factor <= 1,
          "shield: coupling_factor must be in (0, 1]");
}

DpdmParams DpdmParams::from_frequency(double frequency_hz, double epsilon,
                                      double phase_rad,
                                      double amplitude_scale) {
  DpdmParams p;
  p.frequency_hz = frequency_hz;
  p.mass_ev = freq_to_mass_ev(frequency_hz);
  p.epsilon = epsilon;
  p.phase_rad = phase_rad;
  p.amplitude_scale = amplitude_scale;
  p.validate();
  return p;
}

void DpdmParams::validate() const {
  require(frequency_hz > 0, "dpdm: frequency must be > 0");
  require(epsilon >= 0, "dpdm: epsilon must be >= 0");
  require(amplitude_scale >= 0, "dpdm: amplitude_scale must be >= 0");
  const double expected_mass = constants::kPlanckEvS * frequency_hz;
  require(std::abs(mass_ev - expected_mass) <= 1e-9 * expected_mass,
          "dpdm: mass inconsistent with frequency");
  const double norm = std::sqrt(polarization[0] * polarization[0] +
                                polarization[1] * polarization[1] +
                                polarization[2] * polarization[2]);
  require(std::abs(norm - 1.0) <= 1e-12, "dpdm: polarization must be unit");
}

double freq_to_mass_ev(double frequency_hz) {
  require(frequency_hz > 0, "freq_to_mass: frequency must be > 0");
  return constants::kPlanckEvS * frequency_hz;
}

double mass_to_freq_hz(double mass_ev) {
  require(mass_ev > 0, "mass_to_freq: mass must be > 0");
  return mass_ev / constants::kPlanckEvS;
}

CoherenceProperties coherence_properties(double frequency_hz,
                                         const HaloModel& halo) {
  require(frequency_hz > 0, "coherence: frequency must be > 0");
  halo.validate();
  CoherenceProperties c;
  c.time_s = halo.quality_factor / frequency_hz;
  const double mass_ev = freq_to_mass_ev(frequency_hz);
  c.length_m = constants::kHbarCEvM / (mass_ev * halo.velocity_dispersion);
  return c;
}

double wall_field_amplitude_t(double epsilon, double frequency_hz,
                              const ShieldGeometry& geom) {
  require(epsilon >= 0, "wall_field: epsilon must be >= 0");
  require(frequency_hz > 0, "wall_field: frequency must be > 0");
  geom.validate();
  return constants::kWallFieldCoeffTesla * epsilon *
         (frequency_hz / constants::kWallFieldRefFreqHz) *
         (geom.edge_length_m / constants::kWallFieldRefEdgeM) *
         geom.coupling_factor;
}

double epsilon_from_field(double field_t, double frequency_hz,
                          const ShieldGeometry& geom) {
  require(field_t >= 0, "epsilon_from_field: field must be >= 0");
  require(frequency_hz > 0, "epsilon_from_field: frequency must be > 0");
  geom.validate();  // rejects zero coupling (signal-blind direction)
  return field_t / (constants::kWallFieldCoeffTesla *
                    (frequency_hz / constants::kWallFieldRefFreqHz) *
                    (geom.edge_length_m / constants::kWallFieldRefEdgeM) *
                    geom.coupling_factor);
}

double rms_potential_ev(double mass_ev, const HaloModel& halo) {
  require(mass_ev > 0, "rms_potential: mass must be > 0");
  halo.validate();
  const double rho_ev4 =
      halo.local_density_gev_cm3 * constants::gev_per_cm3_in_ev4();
  return std::sqrt(2.0 * rho_ev4) / mass_ev;
}

double wall_field_from_first_principles_t(double epsilon, double frequency_hz,
                                          const ShieldGeometry& geom,
                                          const HaloModel& halo) {
  require(epsilon >= 0, "wall_field: epsilon must be >= 0");
  require(frequency_hz > 0, "wall_field: frequency must be > 0");
  geom.validate();
  const double mass_ev = freq_to_mass_ev(frequency_hz);
  // B ~ |J_eff| L = eps m^2 |A'| L with |A'| = sqrt(2 rho)/m; a single
  // sensor axis sees 1/sqrt(3) of the randomly oriented field.
  const double potential_ev = rms_potential_ev(mass_ev, halo);
  const double edge_natural = geom.edge_length_m / constants::kHbarCEvM;
  const double b_natural = epsilon * mass_ev * mass_ev * potential_ev *
                           edge_natural / std::sqrt(3.0);
  return b_natural / constants::tesla_in_ev2() * geom.coupling_factor;
}

}  // namespace dpnet
