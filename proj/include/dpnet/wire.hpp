#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dpnet/simnet.hpp"

namespace dpnet {

// Framed binary layout, little-endian throughout:
//   magic "AMLS" | version u8 | station_id 16B | sensor_id 16B |
//   start_time_gps_ns u64 | sample_rate_mhz u32 | sample_count u32 |
//   samples f64 x count | crc32 u32 over all preceding bytes
inline constexpr std::array<uint8_t, 4> kFrameMagic{'A', 'M', 'L', 'S'};
inline constexpr uint8_t kWireVersion = 1;
inline constexpr size_t kFrameIdBytes = 16;
inline constexpr size_t kFrameHeaderBytes = 4 + 1 + 16 + 16 + 8 + 4 + 4;  // 53
inline constexpr size_t kFrameMaxSamples = 1u << 20;

enum class WireStatus {
  ok,
  bad_magic,
  unsupported_version,
  crc_mismatch,
  truncated,
  frame_too_large,
  id_too_long,
  corrupt_file,
};

const char* wire_status_name(WireStatus s);

class WireError : public std::runtime_error {
 public:
  WireError(WireStatus status, const std::string& what)
      : std::runtime_error(what), status_(status) {}
  WireStatus status() const { return status_; }

 private:
  WireStatus status_;
};

struct Frame {
  std::string station_id;
  std::string sensor_id;
  uint64_t start_time_gps_ns = 0;
  uint32_t sample_rate_mhz = 0;  // millihertz
  std::vector<double> samples;

  double sample_rate_hz() const { return sample_rate_mhz / 1000.0; }
  size_t encoded_size() const {
    return kFrameHeaderBytes + samples.size() * 8 + 4;
  }
  bool operator==(const Frame&) const = default;
};

std::vector<uint8_t> encode_frame(const Frame& frame);

// Decodes one frame from the start of `bytes`.  On success fills `out` and
// sets `consumed` to the frame length.  Every input either decodes cleanly
// or maps to exactly one status code.
WireStatus decode_frame(std::span<const uint8_t> bytes, Frame& out,
                        size_t* consumed = nullptr);

// Splits one record into time-ordered frames plus a terminal empty frame
// marking end-of-record (its start stamp is the end of the data).
std::vector<Frame> record_to_frames(const TimeSeriesRecord& record,
                                    size_t chunk_samples);

// GPS stamp of the sample at index `cum` given the record start.
uint64_t frame_start_ns(uint64_t record_start_ns, uint64_t cum_samples,
                        double sample_rate_hz);

// Run files:
//   header: magic "AMLR" | version u8 | uuid 16B | spec_hash u64 |
//           sensor_count u32 | crc32
//   body:   frames, grouped per sensor in time order
//   footer: magic "AMLF" | sensor_count u32 |
//           per sensor { station 16B | sensor 16B | frame_count u32 |
//                        total_samples u64 } | crc32
inline constexpr std::array<uint8_t, 4> kRunFileMagic{'A', 'M', 'L', 'R'};
inline constexpr std::array<uint8_t, 4> kRunFooterMagic{'A', 'M', 'L', 'F'};

struct RunFileInfo {
  std::array<uint8_t, 16> uuid{};
  uint64_t spec_hash = 0;
};

void write_run(const RunData& run, const std::filesystem::path& path,
               const RunFileInfo& info);

// Throws WireError (corrupt_file or a codec status) on any inconsistency;
// a truncated file never yields partial data.
RunData read_run(const std::filesystem::path& path,
                 RunFileInfo* info = nullptr);

}  // namespace dpnet
