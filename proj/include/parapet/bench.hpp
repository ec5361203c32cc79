// bench.hpp -- flow-table scalability microbenchmark: per-packet policing
// latency and memory footprint across table sizes.
#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "parapet/core.hpp"
#include "parapet/flow_table.hpp"
#include "parapet/policer.hpp"

namespace parapet {

struct BenchPoint {
  std::size_t table_size = 0;
  std::uint64_t ops = 0;
  double median_ns = 0.0;
  double p99_ns = 0.0;
  std::size_t bytes_per_entry_semantic = sizeof(FlowEntry);
  long long container_bytes = 0;  // resident-set growth while populating
};

inline long long resident_bytes() {
  std::ifstream statm("/proc/self/statm");
  long long total = 0, resident = 0;
  if (statm >> total >> resident) return resident * 4096;
  return -1;
}

// Rough per-entry budget for the pre-flight check: payload plus hash-map node
// and bucket overhead.
inline bool bench_memory_preflight(std::size_t table_size, std::string* reason = nullptr) {
  constexpr long long kBytesPerEntry = 72;
  long long needed = static_cast<long long>(table_size) * kBytesPerEntry;
  std::ifstream meminfo("/proc/meminfo");
  std::string key;
  long long kb = 0;
  while (meminfo >> key >> kb) {
    std::string unit;
    std::getline(meminfo, unit);
    if (key == "MemAvailable:") {
      long long avail = kb * 1024;
      if (needed + (512LL << 20) > avail) {
        if (reason) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "need ~%lld MB, %lld MB available", needed >> 20,
                        avail >> 20);
          *reason = buf;
        }
        return false;
      }
      return true;
    }
  }
  return true;  // no meminfo; let the allocator decide
}

// Populates a table of the requested size and streams synthetic packets of
// existing flows through the per-packet path, pipelined the way a batched
// forwarding loop would run it: warm the burst's table slots in one pass,
// then run the per-packet action pass. Sources arrive in short per-flow
// trains (senders emit whole windows, not isolated packets). Latency is
// sampled per batch so the clock does not dominate the measurement.
inline BenchPoint run_bench_point(std::size_t table_size, std::uint64_t min_ops = 1 << 21) {
  BenchPoint pt;
  pt.table_size = table_size;

  long long rss_before = resident_bytes();
  FlowTable table(64);
  table.set_allow_all(true);
  table.reserve(table_size);

  PolicerParams params;
  params.detection_period = 500;
  params.bandwidth = static_cast<double>(table_size) * 100.0;
  params.expected_flows = table_size;

  for (std::size_t i = 0; i < table_size; ++i)
    table.admit(static_cast<FlowId>(i), params, 0);
  pt.container_bytes = resident_bytes() - rss_before;

  PacketQueue qc(1 << 16);
  CongestionPolicer policer(table, params, qc);

  // bursts mirror a batched forwarding loop: one tight pass warming the
  // table slots of the whole burst, then the per-packet action pass
  constexpr std::uint32_t kBatch = 4096;
  constexpr std::uint32_t kBurst = 64;
  std::vector<FlowId> sources(kBatch);
  std::vector<double> batch_ns;
  batch_ns.reserve(static_cast<std::size_t>(min_ops / kBatch) + 1);

  constexpr std::uint32_t kTrain = 16;
  std::uint64_t lcg = 0x9e3779b97f4a7c15ull;
  std::uint64_t done = 0;
  FlowId sink = 0;
  Tick now = 1;
  while (done < min_ops) {
    for (std::size_t i = 0; i < sources.size(); i += kTrain) {
      lcg = lcg * 6364136223846793005ull + 1442695040888963407ull;
      FlowId src = static_cast<FlowId>((lcg >> 32) % table_size);
      for (std::size_t k = i; k < std::min(sources.size(), i + kTrain); ++k) sources[k] = src;
    }
    auto t0 = std::chrono::steady_clock::now();
    for (std::uint32_t base = 0; base < kBatch; base += kBurst) {
      for (std::uint32_t k = 0; k < kBurst; ++k) sink ^= table.prefetch(sources[base + k]);
      for (std::uint32_t k = 0; k < kBurst; ++k) {
        PacketRecord pkt{sources[base + k], now, PacketKind::Regular, 0, kPacketBytes};
        policer.process_packet(pkt);
      }
    }
    asm volatile("" ::"r"(sink));
    auto t1 = std::chrono::steady_clock::now();
    batch_ns.push_back(
        std::chrono::duration_cast<std::chrono::duration<double, std::nano>>(t1 - t0).count() /
        kBatch);
    done += kBatch;
    now += 1;  // slow clock advance: occasional rollovers, no constant churn
    qc.clear();
  }

  std::sort(batch_ns.begin(), batch_ns.end());
  pt.ops = done;
  pt.median_ns = batch_ns[batch_ns.size() / 2];
  pt.p99_ns = batch_ns[std::min(batch_ns.size() - 1,
                                static_cast<std::size_t>(batch_ns.size() * 0.99))];
  return pt;
}

}  // namespace parapet
