// core.hpp -- shared primitives: simulated time, flow ids, packets, FIFO queues.
#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <limits>
#include <optional>
#include <string_view>

namespace parapet {

using Tick = std::int64_t;
using FlowId = std::uint32_t;

// All traffic is normalized to fixed-size packets.
inline constexpr std::uint16_t kPacketBytes = 1500;

enum class PacketKind : std::uint8_t { Regular, Syn, UdpService };

struct PacketRecord {
  FlowId source = 0;
  Tick arrival = 0;
  PacketKind kind = PacketKind::Regular;
  std::uint16_t service_port = 0;  // meaningful for UdpService
  std::uint16_t size_bytes = kPacketBytes;
};

// Converts bits/s into 1500-byte packets per interval_seconds.
inline double bandwidth_to_packets(double bits_per_second, double interval_seconds) {
  return bits_per_second * interval_seconds / (kPacketBytes * 8.0);
}

// Bounded FIFO of packets. push() fails when full; drop accounting lives here.
class PacketQueue {
 public:
  PacketQueue() = default;
  explicit PacketQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(const PacketRecord& p) {
    if (buf_.size() >= capacity_) {
      ++dropped_full_;
      return false;
    }
    buf_.push_back(p);
    ++pushed_;
    return true;
  }

  std::optional<PacketRecord> pop() {
    if (buf_.empty()) return std::nullopt;
    PacketRecord p = buf_.front();
    buf_.pop_front();
    ++popped_;
    return p;
  }

  bool empty() const { return buf_.empty(); }
  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  void set_capacity(std::size_t c) { capacity_ = c; }
  void clear() { buf_.clear(); }

  std::uint64_t pushed() const { return pushed_; }
  std::uint64_t popped() const { return popped_; }
  std::uint64_t dropped_full() const { return dropped_full_; }

 private:
  std::deque<PacketRecord> buf_;
  std::size_t capacity_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t popped_ = 0;
  std::uint64_t dropped_full_ = 0;
};

// Accepts dotted-quad ("10.0.0.7") or a plain unsigned 32-bit integer.
inline std::optional<FlowId> parse_flow_id(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool dotted = s.find('.') != std::string_view::npos;
  if (!dotted) {
    std::uint64_t v = 0;
    for (char c : s) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
      v = v * 10 + (c - '0');
      if (v > std::numeric_limits<FlowId>::max()) return std::nullopt;
    }
    return static_cast<FlowId>(v);
  }
  std::uint32_t parts[4] = {0, 0, 0, 0};
  int n = 0;
  std::size_t i = 0;
  while (i <= s.size()) {
    std::size_t j = i;
    std::uint32_t v = 0;
    bool any = false;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
      v = v * 10 + (s[j] - '0');
      if (v > 255) return std::nullopt;
      ++j;
      any = true;
    }
    if (!any || n >= 4) return std::nullopt;
    parts[n++] = v;
    if (j == s.size()) break;
    if (s[j] != '.') return std::nullopt;
    i = j + 1;
    if (i == s.size()) return std::nullopt;  // trailing dot
  }
  if (n != 4) return std::nullopt;
  return (parts[0] << 24) | (parts[1] << 16) | (parts[2] << 8) | parts[3];
}

namespace logging {

enum class Level { Quiet = 0, Info = 1, Debug = 2 };

inline Level level() {
  static Level lv = [] {
    const char* e = std::getenv("PARAPET_LOG");
    if (!e) return Level::Info;
    if (std::strcmp(e, "quiet") == 0) return Level::Quiet;
    if (std::strcmp(e, "debug") == 0) return Level::Debug;
    return Level::Info;
  }();
  return lv;
}

template <typename... Args>
void info(const char* fmt, Args... args) {
  if (level() >= Level::Info) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

template <typename... Args>
void debug(const char* fmt, Args... args) {
  if (level() >= Level::Debug) {
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
  }
}

}  // namespace logging

}  // namespace parapet
