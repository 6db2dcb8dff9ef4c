#include "dpnet/bundle.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "dpnet/wire.hpp"

namespace dpnet {

namespace {

constexpr std::array<uint8_t, 4> kBundleMagic{'A', 'M', 'L', 'B'};

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<uint64_t>(v));
}

void put_id16(std::vector<uint8_t>& out, const std::string& id) {
  if (id.size() > 16)
    throw WireError(WireStatus::id_too_long, "bundle: id exceeds 16 bytes");
  out.insert(out.end(), id.begin(), id.end());
  out.insert(out.end(), 16 - id.size(), 0);
}

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  void need(size_t n) const {
    if (bytes.size() - pos < n)
      throw WireError(WireStatus::corrupt_file, "bundle: truncated");
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[pos + static_cast<size_t>(i)];
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[pos + static_cast<size_t>(i)];
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string id16() {
    need(16);
    size_t len = 16;
    while (len > 0 && bytes[pos + len - 1] == 0) --len;
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += 16;
    return s;
  }
};

}  // namespace

void write_bundle(const SpectraBundle& bundle, const std::filesystem::path& path) {
  std::vector<uint8_t> out;
  out.insert(out.end(), kBundleMagic.begin(), kBundleMagic.end());
  put_u8(out, kWireVersion);
  put_u64(out, bundle.config_hash);

  put_u32(out, static_cast<uint32_t>(bundle.spectra.size()));
  for (const auto& cs : bundle.spectra) {
    put_id16(out, cs.station_a);
    put_id16(out, cs.sensor_a);
    put_id16(out, cs.station_b);
    put_id16(out, cs.sensor_b);
    put_u8(out, cs.same_station ? 1 : 0);
    put_u32(out, static_cast<uint32_t>(cs.n_segments));
    put_f64(out, cs.f0_hz);
    put_f64(out, cs.df_hz);
    put_u32(out, static_cast<uint32_t>(cs.n_bins()));
    for (const auto& v : cs.values) {
      put_f64(out, v.real());
      put_f64(out, v.imag());
    }
  }

  put_u32(out, static_cast<uint32_t>(bundle.averaged.size()));
  for (const auto& avg : bundle.averaged) {
    put_u8(out, static_cast<uint8_t>(avg.subset));
    put_u32(out, static_cast<uint32_t>(avg.n_correlators));
    put_u32(out, static_cast<uint32_t>(avg.n_segments));
    put_f64(out, avg.f0_hz);
    put_f64(out, avg.df_hz);
    put_u32(out, static_cast<uint32_t>(avg.mean_real.size()));
    for (double v : avg.mean_real) put_f64(out, v);
    for (double v : avg.bin_sigma) put_f64(out, v);
  }

  const uint32_t crc = static_cast<uint32_t>(
      ::crc32(0L, out.data(), static_cast<uInt>(out.size())));
  put_u32(out, crc);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file)
    throw std::runtime_error("bundle: cannot open for writing: " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
}

SpectraBundle read_bundle(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file)
    throw std::runtime_error("bundle: cannot open for reading: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 1 + 8 + 4 + 4 + 4)
    throw WireError(WireStatus::corrupt_file, "bundle: too short");
  if (!std::equal(kBundleMagic.begin(), kBundleMagic.end(), bytes.begin()))
    throw WireError(WireStatus::corrupt_file, "bundle: bad magic");
  const uint32_t stored = [&] {
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | bytes[bytes.size() - 4 + static_cast<size_t>(i)];
    return v;
  }();
  if (static_cast<uint32_t>(::crc32(
          0L, bytes.data(), static_cast<uInt>(bytes.size() - 4))) != stored)
    throw WireError(WireStatus::crc_mismatch, "bundle: crc mismatch");

  Reader r{bytes, 4};
  if (r.u8() != kWireVersion)
    throw WireError(WireStatus::unsupported_version, "bundle: bad version");

  SpectraBundle bundle;
  bundle.config_hash = r.u64();
  const uint32_t n_spectra = r.u32();
  bundle.spectra.resize(n_spectra);
  for (auto& cs : bundle.spectra) {
    cs.station_a = r.id16();
    cs.sensor_a = r.id16();
    cs.station_b = r.id16();
    cs.sensor_b = r.id16();
    cs.same_station = r.u8() != 0;
    cs.n_segments = r.u32();
    cs.f0_hz = r.f64();
    cs.df_hz = r.f64();
    const uint32_t n_bins = r.u32();
    cs.values.resize(n_bins);
    for (auto& v : cs.values) {
      const double re = r.f64();
      const double im = r.f64();
      v = {re, im};
    }
  }
  const uint32_t n_avg = r.u32();
  bundle.averaged.resize(n_avg);
  for (auto& avg : bundle.averaged) {
    avg.subset = static_cast<SubsetLabel>(r.u8());
    avg.n_correlators = r.u32();
    avg.n_segments = r.u32();
    avg.f0_hz = r.f64();
    avg.df_hz = r.f64();
    const uint32_t n_bins = r.u32();
    avg.mean_real.resize(n_bins);
    avg.bin_sigma.resize(n_bins);
    for (auto& v : avg.mean_real) v = r.f64();
    for (auto& v : avg.bin_sigma) v = r.f64();
  }
  if (r.pos != bytes.size() - 4)
    throw WireError(WireStatus::corrupt_file, "bundle: trailing bytes");
  return bundle;
}

}  // namespace dpnet
