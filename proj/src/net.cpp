#include "dpnet/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

namespace dpnet {

namespace {

struct FdGuard {
  int fd = -1;
  ~FdGuard() { reset(); }
  void reset(int new_fd = -1) {
    if (fd >= 0) ::close(fd);
    fd = new_fd;
  }
  int release() {
    int f = fd;
    fd = -1;
    return f;
  }
};

bool send_all(int fd, const uint8_t* data, size_t n) {
  size_t off = 0;
  while (off < n) {
    const ssize_t w = ::send(fd, data + off, n - off, MSG_NOSIGNAL);
    if (w <= 0) return false;
    off += static_cast<size_t>(w);
  }
  return true;
}

// Reads exactly n bytes; returns false on EOF/error/timeout.
bool recv_exact(int fd, uint8_t* data, size_t n) {
  size_t off = 0;
  while (off < n) {
    const ssize_t r = ::recv(fd, data + off, n - off, 0);
    if (r <= 0) return false;
    off += static_cast<size_t>(r);
  }
  return true;
}

int connect_to(const Endpoint& ep) {
  FdGuard fd;
  fd.reset(::socket(AF_INET, SOCK_STREAM, 0));
  if (fd.fd < 0) return -1;
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1) return -1;
  if (::connect(fd.fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    return -1;
  const int one = 1;
  ::setsockopt(fd.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return fd.release();
}

}  // namespace

Endpoint Endpoint::parse(const std::string& host_port) {
  const auto colon = host_port.rfind(':');
  if (colon == std::string::npos || colon + 1 >= host_port.size())
    throw std::invalid_argument("endpoint: expected host:port, got " + host_port);
  Endpoint ep;
  ep.host = host_port.substr(0, colon);
  if (ep.host == "localhost") ep.host = "127.0.0.1";
  const long port = std::stol(host_port.substr(colon + 1));
  if (port <= 0 || port > 65535)
    throw std::invalid_argument("endpoint: port out of range in " + host_port);
  ep.port = static_cast<uint16_t>(port);
  return ep;
}

std::string Endpoint::str() const {
  return host + ":" + std::to_string(port);
}

void FrameAssembler::ingest(const Frame& frame) {
  const SensorKey key{frame.station_id, frame.sensor_id};
  auto& sf = sensors_[key];
  if (sf.by_start.empty()) {
    sf.rate_mhz = frame.sample_rate_mhz;
  } else if (frame.sample_rate_mhz != sf.rate_mhz) {
    throw CollectError("collector: sample-rate conflict for " +
                       frame.station_id + "/" + frame.sensor_id);
  }
  auto [it, inserted] = sf.by_start.emplace(frame.start_time_gps_ns, frame);
  if (!inserted && !(it->second == frame))
    throw CollectError("collector: conflicting duplicate frame for " +
                       frame.station_id + "/" + frame.sensor_id + " at start " +
                       std::to_string(frame.start_time_gps_ns));
}

bool FrameAssembler::sensor_complete(const SensorKey& key) const {
  auto it = sensors_.find(key);
  if (it == sensors_.end() || it->second.by_start.empty()) return false;
  const auto& frames = it->second.by_start;
  // Complete when the last frame is the empty end marker and every frame
  // starts exactly where the previous one ended.
  if (!frames.rbegin()->second.samples.empty()) return false;
  const uint64_t start = frames.begin()->first;
  const double rate_hz = it->second.rate_mhz / 1000.0;
  uint64_t cum = 0;
  for (const auto& [fstart, frame] : frames) {
    if (fstart != frame_start_ns(start, cum, rate_hz)) return false;
    cum += frame.samples.size();
  }
  return true;
}

bool FrameAssembler::all_complete(const std::vector<SensorKey>& expected) const {
  return std::all_of(expected.begin(), expected.end(),
                     [this](const SensorKey& k) { return sensor_complete(k); });
}

std::vector<SensorKey> FrameAssembler::incomplete(
    const std::vector<SensorKey>& expected) const {
  std::vector<SensorKey> out;
  for (const auto& k : expected)
    if (!sensor_complete(k)) out.push_back(k);
  return out;
}

RunData FrameAssembler::finalize(const std::vector<SensorKey>& expected,
                                 double grid_tolerance_s) const {
  if (expected.empty())
    throw std::invalid_argument("collector: expected sensor list is empty");
  const auto missing = incomplete(expected);
  if (!missing.empty()) {
    std::string names;
    for (const auto& k : missing) names += " " + k.station_id + "/" + k.sensor_id;
    throw CollectError("collector: incomplete sensors:" + names);
  }

  std::vector<TimeSeriesRecord> records;
  records.reserve(expected.size());
  for (const auto& key : expected) {
    const auto& sf = sensors_.at(key);
    TimeSeriesRecord rec;
    rec.station_id = key.station_id;
    rec.sensor_id = key.sensor_id;
    rec.start_time_gps_ns = sf.by_start.begin()->first;
    rec.sample_rate_hz = sf.rate_mhz / 1000.0;
    for (const auto& [start, frame] : sf.by_start)
      rec.samples.insert(rec.samples.end(), frame.samples.begin(),
                         frame.samples.end());
    records.push_back(std::move(rec));
  }

  const double rate = records[0].sample_rate_hz;
  for (const auto& r : records)
    if (r.sample_rate_hz != rate)
      throw CollectError("collector: mixed sample rates in run");

  // Grid check: every start must sit on the shared sampling grid.
  const uint64_t ref =
      std::min_element(records.begin(), records.end(),
                       [](const auto& a, const auto& b) {
                         return a.start_time_gps_ns < b.start_time_gps_ns;
                       })
          ->start_time_gps_ns;
  const double period_ns = 1e9 / rate;
  for (const auto& r : records) {
    const double delta = static_cast<double>(r.start_time_gps_ns - ref);
    const double frac = delta - std::round(delta / period_ns) * period_ns;
    if (std::abs(frac) > grid_tolerance_s * 1e9)
      throw CollectError("collector: sensor " + r.station_id + "/" +
                         r.sensor_id + " misaligned from shared grid by " +
                         std::to_string(frac / 1e3) + " us");
  }

  // Trim to the maximal common window.
  uint64_t window_start = 0;
  uint64_t window_end = UINT64_MAX;
  for (const auto& r : records) {
    window_start = std::max(window_start, r.start_time_gps_ns);
    const uint64_t end =
        frame_start_ns(r.start_time_gps_ns, r.samples.size(), rate);
    window_end = std::min(window_end, end);
  }

  RunData run;
  for (auto& r : records) {
    const double off =
        static_cast<double>(window_start - r.start_time_gps_ns) * rate / 1e9;
    const size_t skip = static_cast<size_t>(std::llround(off));
    size_t keep = 0;
    if (window_end > window_start) {
      const double len =
          static_cast<double>(window_end - window_start) * rate / 1e9;
      keep = static_cast<size_t>(std::llround(len));
    }
    keep = std::min(keep, r.samples.size() - std::min(skip, r.samples.size()));
    TimeSeriesRecord out;
    out.station_id = r.station_id;
    out.sensor_id = r.sensor_id;
    out.start_time_gps_ns = window_start;
    out.sample_rate_hz = rate;
    out.samples.assign(r.samples.begin() + static_cast<long>(skip),
                       r.samples.begin() + static_cast<long>(skip + keep));
    run.records.push_back(std::move(out));
  }
  return run;
}

NodeStats run_node(const TimeSeriesRecord& record, const Endpoint& endpoint,
                   const NodeOptions& options) {
  const auto frames = record_to_frames(record, options.chunk_samples);
  NodeStats stats;
  stats.data_frames = frames.size() - 1;

  auto backoff = options.initial_backoff;
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    stats.attempts = attempt + 1;
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    FdGuard fd;
    fd.reset(connect_to(endpoint));
    if (fd.fd < 0) continue;
    timeval tv{10, 0};
    ::setsockopt(fd.fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    bool ok = true;
    for (const auto& f : frames) {
      const auto bytes = encode_frame(f);
      if (!send_all(fd.fd, bytes.data(), bytes.size())) {
        ok = false;
        break;
      }
      ++stats.frames_sent;
    }
    if (ok) {
      // Delivered only once the collector acknowledges the end marker;
      // otherwise resend everything (at-least-once, collector dedupes).
      uint8_t ack = 0;
      ok = recv_exact(fd.fd, &ack, 1) && ack == 0x06;
    }
    if (ok) return stats;
  }
  throw CollectError("node: endpoint " + endpoint.str() + " unreachable after " +
                     std::to_string(options.max_retries + 1) + " attempts");
}

Collector::Collector(const Endpoint& bind_endpoint,
                     std::vector<SensorKey> expected, CollectorOptions options)
    : expected_(std::move(expected)), options_(options) {
  if (expected_.empty())
    throw std::invalid_argument("collector: expected sensor list is empty");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw CollectError("collector: socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(bind_endpoint.port);
  if (::inet_pton(AF_INET, bind_endpoint.host.c_str(), &addr.sin_addr) != 1)
    throw CollectError("collector: bad bind address " + bind_endpoint.host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw CollectError("collector: bind failed on " + bind_endpoint.str());
  if (::listen(listen_fd_, 64) != 0)
    throw CollectError("collector: listen failed");
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Collector::~Collector() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void Collector::serve_session(int fd, int session_index) {
  FdGuard guard;
  guard.reset(fd);
  timeval tv{5, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));

  const bool drop_enabled = options_.debug_drop_after_frames > 0 &&
                            session_index < options_.debug_drop_sessions;
  int frames_in_session = 0;
  std::vector<uint8_t> buf;
  while (true) {
    buf.resize(kFrameHeaderBytes);
    if (!recv_exact(fd, buf.data(), kFrameHeaderBytes)) return;
    Frame probe;
    // Validate the header fields before reading the payload.
    const WireStatus head = decode_frame(buf, probe);
    if (head != WireStatus::truncated && head != WireStatus::ok) return;
    uint32_t count = 0;
    std::memcpy(&count, buf.data() + 49, 4);
    if (count > kFrameMaxSamples) return;
    const size_t rest = static_cast<size_t>(count) * 8 + 4;
    buf.resize(kFrameHeaderBytes + rest);
    if (!recv_exact(fd, buf.data() + kFrameHeaderBytes, rest)) return;
    Frame frame;
    if (decode_frame(buf, frame) != WireStatus::ok) return;

    ++frames_in_session;
    if (drop_enabled && frames_in_session > options_.debug_drop_after_frames)
      return;  // simulated transport fault; the node must retry

    const bool is_end_marker = frame.samples.empty();
    {
      std::lock_guard<std::mutex> lock(mutex_);
      assembler_.ingest(frame);
    }
    if (is_end_marker) {
      // Session acknowledgement: the node only treats the record as
      // delivered once the end marker round-trips.
      const uint8_t ack = 0x06;
      send_all(fd, &ack, 1);
    }
  }
}

RunData Collector::collect() {
  const auto deadline = std::chrono::steady_clock::now() + options_.deadline;
  std::vector<std::thread> sessions;
  int session_index = 0;
  while (true) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (assembler_.all_complete(expected_)) break;
    }
    if (std::chrono::steady_clock::now() >= deadline) break;

    pollfd pfd{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, 100);
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    sessions.emplace_back(&Collector::serve_session, this, fd, session_index++);
  }
  for (auto& t : sessions) t.join();

  std::lock_guard<std::mutex> lock(mutex_);
  if (!assembler_.all_complete(expected_)) {
    std::string names;
    for (const auto& k : assembler_.incomplete(expected_))
      names += " " + k.station_id + "/" + k.sensor_id;
    throw CollectError("collector: deadline expired; missing sensors:" + names);
  }
  return assembler_.finalize(expected_, options_.grid_tolerance_s);
}

RunData run_collector(const Endpoint& endpoint,
                      const std::vector<SensorKey>& expected,
                      CollectorOptions options) {
  Collector collector(endpoint, expected, options);
  return collector.collect();
}

}  // namespace dpnet
