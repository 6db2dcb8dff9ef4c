#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace dpnet {

// SplitMix64 finalizer; full-avalanche 64-bit mix.
uint64_t mix64(uint64_t x);

// FNV-1a over bytes, for keying streams by string ids.
uint64_t fnv1a64(std::string_view s);

// Counter-style deterministic generator.  A stream is fully determined by its
// key, so records can be produced in parallel and out of order with identical
// results.  Passes the usual avalanche checks inherited from SplitMix64.
class KeyedStream {
 public:
  explicit KeyedStream(uint64_t key) : state_(mix64(key ^ 0x6A09E667F3BCC909ull)) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; generated in pairs.
  double next_gaussian();

  void fill_gaussian(std::span<double> out);

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Key derivation: chain-mix the seed with stream labels and a block index.
uint64_t derive_key(uint64_t seed, uint64_t a, uint64_t b, uint64_t c,
                    uint64_t block);

}  // namespace dpnet
