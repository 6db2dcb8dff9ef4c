#include "dpnet/constants.hpp"

#include <cmath>

#include <json.hpp>

namespace dpnet::constants {

double gev_per_cm3_in_ev4() {
  // 1 GeV/cm^3 = 1e9 eV * 1e6 m^-3; each m^-1 is (hbar c) eV.
  const double hbarc3 = kHbarCEvM * kHbarCEvM * kHbarCEvM;
  return 1e9 * 1e6 * hbarc3;
}

double tesla_in_ev2() {
  // u = B^2/(2 mu0) [J/m^3] equals B_nat^2/2 [eV^4] in natural units.
  const double joule_per_m3_in_ev4 =
      (1.0 / kJoulePerEv) * kHbarCEvM * kHbarCEvM * kHbarCEvM;
  return std::sqrt((1.0 / kMu0) * joule_per_m3_in_ev4);
}

std::string constants_json() {
  nlohmann::ordered_json j;
  j["planck_h_ev_s"] = {{"value", kPlanckEvS},
                        {"unit", "eV s"},
                        {"source", "CODATA 2018, exact"}};
  j["hbar_c_ev_m"] = {{"value", kHbarCEvM},
                      {"unit", "eV m"},
                      {"source", "CODATA 2018"}};
  j["speed_of_light_m_s"] = {{"value", kSpeedOfLightMS},
                             {"unit", "m/s"},
                             {"source", "SI definition, exact"}};
  j["mu0_n_a2"] = {{"value", kMu0},
                   {"unit", "N/A^2"},
                   {"source", "CODATA 2018"}};
  j["joule_per_ev"] = {{"value", kJoulePerEv},
                       {"unit", "J/eV"},
                       {"source", "SI definition, exact"}};
  j["tesla_in_ev2"] = {{"value", tesla_in_ev2()},
                       {"unit", "eV^2/T"},
                       {"source", "derived: sqrt(2 * (1 T)^2/(2 mu0) in eV^4)"}};
  j["gev_per_cm3_in_ev4"] = {{"value", gev_per_cm3_in_ev4()},
                             {"unit", "eV^4 per GeV/cm^3"},
                             {"source", "derived: 1e15 eV/m^3 * (hbar c)^3"}};
  j["wall_field_coeff_tesla"] = {
      {"value", kWallFieldCoeffTesla},
      {"unit", "T per unit mixing at 10 Hz, 1 m edge"},
      {"source", "pinned; reproduced from halo density to <5%"}};
  j["default_halo_density_gev_cm3"] = {{"value", kDefaultHaloDensityGevCm3},
                                       {"unit", "GeV/cm^3"},
                                       {"source", "standard local value"}};
  return j.dump(2);
}

}  // namespace dpnet::constants
