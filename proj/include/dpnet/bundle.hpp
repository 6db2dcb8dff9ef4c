#pragma once

#include <filesystem>
#include <vector>

#include "dpnet/correlator.hpp"

namespace dpnet {

// Binary container for pair spectra and their subset averages:
//   magic "AMLB" | version u8 | config_hash u64 | n_spectra u32 |
//   spectra... | n_averaged u32 | averaged... | crc32 over all preceding
struct SpectraBundle {
  uint64_t config_hash = 0;
  std::vector<CrossSpectrum> spectra;
  std::vector<AveragedSpectrum> averaged;
};

void write_bundle(const SpectraBundle& bundle, const std::filesystem::path& path);
SpectraBundle read_bundle(const std::filesystem::path& path);

}  // namespace dpnet
