#include "dpnet/wire.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dpnet {

namespace {

uint32_t crc32_of(std::span<const uint8_t> bytes) {
  return static_cast<uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<uint64_t>(v));
}

void put_id(std::vector<uint8_t>& out, const std::string& id) {
  if (id.size() > kFrameIdBytes)
    throw WireError(WireStatus::id_too_long, "wire: id exceeds 16 bytes: " + id);
  out.insert(out.end(), id.begin(), id.end());
  out.insert(out.end(), kFrameIdBytes - id.size(), 0);
}

uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string get_id(const uint8_t* p) {
  size_t len = kFrameIdBytes;
  while (len > 0 && p[len - 1] == 0) --len;
  return std::string(reinterpret_cast<const char*>(p), len);
}

}  // namespace

const char* wire_status_name(WireStatus s) {
  switch (s) {
    case WireStatus::ok: return "ok";
    case WireStatus::bad_magic: return "bad_magic";
    case WireStatus::unsupported_version: return "unsupported_version";
    case WireStatus::crc_mismatch: return "crc_mismatch";
    case WireStatus::truncated: return "truncated";
    case WireStatus::frame_too_large: return "frame_too_large";
    case WireStatus::id_too_long: return "id_too_long";
    case WireStatus::corrupt_file: return "corrupt_file";
  }
  return "unknown";
}

std::vector<uint8_t> encode_frame(const Frame& frame) {
  if (frame.samples.size() > kFrameMaxSamples)
    throw WireError(WireStatus::frame_too_large, "wire: frame exceeds 2^20 samples");
  std::vector<uint8_t> out;
  out.reserve(frame.encoded_size());
  out.insert(out.end(), kFrameMagic.begin(), kFrameMagic.end());
  out.push_back(kWireVersion);
  put_id(out, frame.station_id);
  put_id(out, frame.sensor_id);
  put_u64(out, frame.start_time_gps_ns);
  put_u32(out, frame.sample_rate_mhz);
  put_u32(out, static_cast<uint32_t>(frame.samples.size()));
  for (double v : frame.samples) put_f64(out, v);
  put_u32(out, crc32_of(out));
  return out;
}

WireStatus decode_frame(std::span<const uint8_t> bytes, Frame& out,
                        size_t* consumed) {
  if (bytes.size() < 4) return WireStatus::truncated;
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), bytes.begin()))
    return WireStatus::bad_magic;
  if (bytes.size() < kFrameHeaderBytes) return WireStatus::truncated;
  if (bytes[4] != kWireVersion) return WireStatus::unsupported_version;

  const uint8_t* p = bytes.data();
  const uint32_t count = get_u32(p + 49);
  if (count > kFrameMaxSamples) return WireStatus::frame_too_large;
  const size_t total = kFrameHeaderBytes + static_cast<size_t>(count) * 8 + 4;
  if (bytes.size() < total) return WireStatus::truncated;

  const uint32_t stored_crc = get_u32(p + total - 4);
  if (crc32_of(bytes.first(total - 4)) != stored_crc)
    return WireStatus::crc_mismatch;

  out.station_id = get_id(p + 5);
  out.sensor_id = get_id(p + 21);
  out.start_time_gps_ns = get_u64(p + 37);
  out.sample_rate_mhz = get_u32(p + 45);
  out.samples.resize(count);
  for (uint32_t i = 0; i < count; ++i)
    out.samples[i] = std::bit_cast<double>(get_u64(p + kFrameHeaderBytes + 8 * i));
  if (consumed) *consumed = total;
  return WireStatus::ok;
}

uint64_t frame_start_ns(uint64_t record_start_ns, uint64_t cum_samples,
                        double sample_rate_hz) {
  const double offset =
      static_cast<double>(cum_samples) * 1e9 / sample_rate_hz;
  return record_start_ns + static_cast<uint64_t>(std::llround(offset));
}

std::vector<Frame> record_to_frames(const TimeSeriesRecord& record,
                                    size_t chunk_samples) {
  if (chunk_samples == 0 || chunk_samples > kFrameMaxSamples)
    throw std::invalid_argument("wire: bad chunk size");
  const uint32_t rate_mhz =
      static_cast<uint32_t>(std::llround(record.sample_rate_hz * 1000.0));
  std::vector<Frame> frames;
  frames.reserve(record.samples.size() / chunk_samples + 2);
  size_t cum = 0;
  while (cum < record.samples.size()) {
    const size_t n = std::min(chunk_samples, record.samples.size() - cum);
    Frame f;
    f.station_id = record.station_id;
    f.sensor_id = record.sensor_id;
    f.start_time_gps_ns =
        frame_start_ns(record.start_time_gps_ns, cum, record.sample_rate_hz);
    f.sample_rate_mhz = rate_mhz;
    f.samples.assign(record.samples.begin() + static_cast<long>(cum),
                     record.samples.begin() + static_cast<long>(cum + n));
    frames.push_back(std::move(f));
    cum += n;
  }
  // Terminal empty frame marks end-of-record.
  Frame end;
  end.station_id = record.station_id;
  end.sensor_id = record.sensor_id;
  end.start_time_gps_ns =
      frame_start_ns(record.start_time_gps_ns, cum, record.sample_rate_hz);
  end.sample_rate_mhz = rate_mhz;
  frames.push_back(std::move(end));
  return frames;
}

namespace {

void append_file(std::vector<uint8_t>& out, const std::vector<uint8_t>& part) {
  out.insert(out.end(), part.begin(), part.end());
}

}  // namespace

void write_run(const RunData& run, const std::filesystem::path& path,
               const RunFileInfo& info) {
  std::vector<uint8_t> bytes;

  std::vector<uint8_t> header;
  header.insert(header.end(), kRunFileMagic.begin(), kRunFileMagic.end());
  header.push_back(kWireVersion);
  header.insert(header.end(), info.uuid.begin(), info.uuid.end());
  put_u64(header, info.spec_hash);
  put_u32(header, static_cast<uint32_t>(run.records.size()));
  put_u32(header, crc32_of(header));
  append_file(bytes, header);

  constexpr size_t kFileChunkSamples = 1u << 18;
  struct FooterEntry {
    std::string station, sensor;
    uint32_t frame_count;
    uint64_t total_samples;
  };
  std::vector<FooterEntry> entries;
  for (const auto& rec : run.records) {
    const auto frames = record_to_frames(rec, kFileChunkSamples);
    for (const auto& f : frames) append_file(bytes, encode_frame(f));
    entries.push_back({rec.station_id, rec.sensor_id,
                       static_cast<uint32_t>(frames.size()),
                       rec.samples.size()});
  }

  std::vector<uint8_t> footer;
  footer.insert(footer.end(), kRunFooterMagic.begin(), kRunFooterMagic.end());
  put_u32(footer, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_id(footer, e.station);
    put_id(footer, e.sensor);
    put_u32(footer, e.frame_count);
    put_u64(footer, e.total_samples);
  }
  put_u32(footer, crc32_of(footer));
  append_file(bytes, footer);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("wire: cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("wire: write failed: " + path.string());
}

RunData read_run(const std::filesystem::path& path, RunFileInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("wire: cannot open for reading: " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());

  auto corrupt = [&](const std::string& why) -> WireError {
    return WireError(WireStatus::corrupt_file,
                     "wire: corrupt run file " + path.string() + ": " + why);
  };

  const size_t header_len = 4 + 1 + 16 + 8 + 4 + 4;
  if (bytes.size() < header_len) throw corrupt("short header");
  if (!std::equal(kRunFileMagic.begin(), kRunFileMagic.end(), bytes.begin()))
    throw corrupt("bad file magic");
  if (bytes[4] != kWireVersion) throw corrupt("unsupported version");
  if (crc32_of({bytes.data(), header_len - 4}) !=
      get_u32(bytes.data() + header_len - 4))
    throw corrupt("header crc mismatch");

  RunFileInfo local;
  std::memcpy(local.uuid.data(), bytes.data() + 5, 16);
  local.spec_hash = get_u64(bytes.data() + 21);
  const uint32_t sensor_count = get_u32(bytes.data() + 29);
  if (info) *info = local;

  // Body: frames until the footer magic.
  struct Partial {
    std::string station, sensor;
    uint64_t start_ns = 0;
    uint32_t rate_mhz = 0;
    uint64_t next_expected_ns = 0;
    uint64_t cum_samples = 0;
    uint32_t frame_count = 0;
    bool ended = false;
    std::vector<double> samples;
  };
  std::map<std::pair<std::string, std::string>, Partial> partials;
  std::vector<std::pair<std::string, std::string>> order;

  size_t pos = header_len;
  while (true) {
    if (bytes.size() - pos >= 4 &&
        std::equal(kRunFooterMagic.begin(), kRunFooterMagic.end(),
                   bytes.begin() + static_cast<long>(pos)))
      break;
    Frame f;
    size_t consumed = 0;
    const WireStatus st =
        decode_frame({bytes.data() + pos, bytes.size() - pos}, f, &consumed);
    if (st != WireStatus::ok)
      throw corrupt(std::string("frame decode: ") + wire_status_name(st));
    pos += consumed;

    const auto key = std::make_pair(f.station_id, f.sensor_id);
    auto it = partials.find(key);
    if (it == partials.end()) {
      Partial p;
      p.station = f.station_id;
      p.sensor = f.sensor_id;
      p.start_ns = f.start_time_gps_ns;
      p.rate_mhz = f.sample_rate_mhz;
      p.next_expected_ns = f.start_time_gps_ns;
      it = partials.emplace(key, std::move(p)).first;
      order.push_back(key);
    }
    Partial& p = it->second;
    if (p.ended) throw corrupt("frame after end marker for " + f.sensor_id);
    if (f.sample_rate_mhz != p.rate_mhz)
      throw corrupt("rate change within record for " + f.sensor_id);
    if (f.start_time_gps_ns != p.next_expected_ns)
      throw corrupt("non-contiguous frames for " + f.sensor_id);
    ++p.frame_count;
    if (f.samples.empty()) {
      p.ended = true;
    } else {
      p.samples.insert(p.samples.end(), f.samples.begin(), f.samples.end());
      p.cum_samples += f.samples.size();
      p.next_expected_ns =
          frame_start_ns(p.start_ns, p.cum_samples, f.sample_rate_hz());
    }
  }

  // Footer.
  size_t fpos = pos + 4;
  auto need = [&](size_t n) {
    if (bytes.size() - fpos < n) throw corrupt("short footer");
  };
  need(4);
  const uint32_t footer_sensors = get_u32(bytes.data() + fpos);
  fpos += 4;
  if (footer_sensors != sensor_count || footer_sensors != partials.size())
    throw corrupt("sensor count mismatch");
  for (uint32_t i = 0; i < footer_sensors; ++i) {
    need(16 + 16 + 4 + 8);
    const std::string station = get_id(bytes.data() + fpos);
    const std::string sensor = get_id(bytes.data() + fpos + 16);
    const uint32_t frame_count = get_u32(bytes.data() + fpos + 32);
    const uint64_t total_samples = get_u64(bytes.data() + fpos + 36);
    fpos += 44;
    auto it = partials.find({station, sensor});
    if (it == partials.end()) throw corrupt("footer names unknown sensor");
    if (it->second.frame_count != frame_count ||
        it->second.samples.size() != total_samples)
      throw corrupt("footer counts do not match body");
    if (!it->second.ended) throw corrupt("record missing end marker");
  }
  need(4);
  if (crc32_of({bytes.data() + pos, fpos - pos}) != get_u32(bytes.data() + fpos))
    throw corrupt("footer crc mismatch");
  fpos += 4;
  if (fpos != bytes.size()) throw corrupt("trailing bytes after footer");

  RunData run;
  run.spec_hash = local.spec_hash;
  for (const auto& key : order) {
    Partial& p = partials.at(key);
    TimeSeriesRecord rec;
    rec.station_id = p.station;
    rec.sensor_id = p.sensor;
    rec.start_time_gps_ns = p.start_ns;
    rec.sample_rate_hz = p.rate_mhz / 1000.0;
    rec.samples = std::move(p.samples);
    run.records.push_back(std::move(rec));
  }
  return run;
}

}  // namespace dpnet
