#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "dpnet/wire.hpp"

namespace dpnet {

struct Endpoint {
  std::string host = "127.0.0.1";
  uint16_t port = 0;

  static Endpoint parse(const std::string& host_port);
  std::string str() const;
};

struct SensorKey {
  std::string station_id;
  std::string sensor_id;
  auto operator<=>(const SensorKey&) const = default;
};

class CollectError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Order-independent reassembly of frames into aligned records.  Duplicate
// frames (same sensor and start stamp) are deduplicated; duplicates with
// differing payloads are hard errors.
class FrameAssembler {
 public:
  void ingest(const Frame& frame);

  bool sensor_complete(const SensorKey& key) const;
  bool all_complete(const std::vector<SensorKey>& expected) const;
  std::vector<SensorKey> incomplete(const std::vector<SensorKey>& expected) const;

  // Builds records for the expected sensors, verifies the shared sampling
  // grid to `grid_tolerance_s`, and trims everything to the maximal common
  // GPS window.  Throws CollectError on missing sensors or misaligned grids.
  RunData finalize(const std::vector<SensorKey>& expected,
                   double grid_tolerance_s) const;

 private:
  struct SensorFrames {
    std::map<uint64_t, Frame> by_start;
    uint32_t rate_mhz = 0;
  };
  std::map<SensorKey, SensorFrames> sensors_;
};

struct NodeOptions {
  size_t chunk_samples = 4096;
  int max_retries = 5;
  std::chrono::milliseconds initial_backoff{50};
};

struct NodeStats {
  size_t data_frames = 0;
  size_t frames_sent = 0;  // including the end marker, over all attempts
  int attempts = 0;
};

// Streams one record to the collector: frames in time order, terminal empty
// frame, reconnect-and-resend with exponential backoff on transient failure
// (at-least-once; the collector deduplicates).  Throws CollectError when the
// endpoint stays unreachable.
NodeStats run_node(const TimeSeriesRecord& record, const Endpoint& endpoint,
                   const NodeOptions& options = {});

struct CollectorOptions {
  double grid_tolerance_s = 10e-6;
  std::chrono::milliseconds deadline{60000};
  // Test hook: abort the first N sessions after this many frames (0 = off),
  // to exercise node retry and dedupe.
  int debug_drop_after_frames = 0;
  int debug_drop_sessions = 1;
};

// TCP collector accepting concurrent node sessions.
class Collector {
 public:
  Collector(const Endpoint& bind_endpoint, std::vector<SensorKey> expected,
            CollectorOptions options = {});
  ~Collector();

  Collector(const Collector&) = delete;
  Collector& operator=(const Collector&) = delete;

  uint16_t port() const { return port_; }

  // Serves sessions until every expected sensor is complete, then assembles.
  // Throws CollectError on deadline expiry with sensors missing.
  RunData collect();

 private:
  void serve_session(int fd, int session_index);

  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::vector<SensorKey> expected_;
  CollectorOptions options_;
  FrameAssembler assembler_;
  std::mutex mutex_;
};

// One-call helper: bind, serve, assemble.
RunData run_collector(const Endpoint& endpoint,
                      const std::vector<SensorKey>& expected,
                      CollectorOptions options = {});

}  // namespace dpnet
