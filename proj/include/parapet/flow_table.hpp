// flow_table.hpp -- per-sender policing state and the table that holds it.
#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#ifdef __linux__
#include <sys/mman.h>
#endif

#include "parapet/core.hpp"

namespace parapet {

// Value part of one table row; the sender id is the map key. The five fields
// pack to exactly 24 bytes (32+32+32+32+64 bits).
struct FlowEntry {
  std::uint32_t t_a = 0;  // first-arrival tick of the current detection period
  float w_r = 0.0f;       // rate limiting window, packets per detection period
  std::uint32_t p_r = 0;  // packets received this period
  std::uint32_t p_d = 0;  // packets dropped this period
  double l_r = 0.0;       // smoothed packet loss rate
};
static_assert(sizeof(FlowEntry) == 24, "flow entry payload must stay 24 bytes");

struct PolicerParams {
  Tick detection_period = 500;    // D_p in ticks (default 5 s at 10 ms ticks)
  double lambda = 0.5;            // weight for previous losses
  double loss_threshold = 0.05;   // L_Th
  double bandwidth = 0.0;         // B, packets per detection period
  double fair_share = 0.0;        // per-sender fair share, packets per period
  double syn_budget_fraction = 0.05;
  int idle_evict_periods = 30;    // entries idle this many periods are evicted
  // When > 0, fair share is computed as B / max(N, expected_flows). Seeded at
  // activation from the admissible population so that flows admitted in the
  // same burst all start from the same share.
  std::size_t expected_flows = 0;

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (detection_period <= 0) v.push_back("policer: detection_period must be > 0");
    if (!(lambda > 0.0 && lambda < 1.0)) v.push_back("policer: lambda must be in (0,1)");
    if (!(loss_threshold > 0.0 && loss_threshold < 1.0))
      v.push_back("policer: loss_threshold must be in (0,1)");
    if (!(bandwidth > 0.0)) v.push_back("policer: bandwidth must be > 0");
    if (!(syn_budget_fraction >= 0.0 && syn_budget_fraction < 1.0))
      v.push_back("policer: syn_budget_fraction must be in [0,1)");
    if (idle_evict_periods <= 0) v.push_back("policer: idle_evict_periods must be > 0");
    return v;
  }
};

class FlowTable;

// W_fair = B / N. Undefined on an empty table.
inline std::optional<double> recompute_fair_share(const FlowTable& table, PolicerParams& params);

// Open-addressing map from flow id to FlowEntry. Key and payload share one
// 32-byte slot, so a lookup is a single linear-probe run over contiguous
// memory and stays flat as the table grows. The all-ones id is reserved as
// the empty-slot marker.
class FlowEntryMap {
 public:
  static constexpr FlowId kReservedId = 0xFFFFFFFFu;

  FlowEntryMap() { rehash(16); }

  FlowEntry* find(FlowId f) {
    std::size_t i = home(f);
    while (true) {
      Slot& s = slots_[i];
      if (s.key == f) return &s.entry;
      if (s.key == kReservedId) return nullptr;
      i = (i + 1) & mask_;
    }
  }
  const FlowEntry* find(FlowId f) const { return const_cast<FlowEntryMap*>(this)->find(f); }

  // Caller guarantees the key is absent and not the reserved id.
  FlowEntry& insert(FlowId f, const FlowEntry& e) {
    if ((size_ + 1) * 10 >= slots_.size() * 7) rehash(slots_.size() * 2);
    std::size_t i = home(f);
    while (slots_[i].key != kReservedId) i = (i + 1) & mask_;
    slots_[i].key = f;
    slots_[i].entry = e;
    ++size_;
    return slots_[i].entry;
  }

  // Backward-shift deletion keeps probe runs intact without tombstones.
  bool erase(FlowId f) {
    std::size_t i = home(f);
    while (true) {
      if (slots_[i].key == f) break;
      if (slots_[i].key == kReservedId) return false;
      i = (i + 1) & mask_;
    }
    std::size_t j = i;
    while (true) {
      j = (j + 1) & mask_;
      if (slots_[j].key == kReservedId) break;
      std::size_t h = home(slots_[j].key);
      bool h_in_gap = (i < j) ? (h > i && h <= j) : (h > i || h <= j);
      if (!h_in_gap) {
        slots_[i] = slots_[j];
        i = j;
      }
    }
    slots_[i].key = kReservedId;
    --size_;
    return true;
  }

  template <typename F>
  void for_each(F&& fn) const {
    for (const Slot& s : slots_)
      if (s.key != kReservedId) fn(s.key, s.entry);
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }

  // Warms the slot (and its TLB entry) for an upcoming lookup; the returned
  // key feeds a sink so the load stays a real, overlappable memory access.
  FlowId prefetch(FlowId f) const {
    const Slot& s = slots_[home(f)];
    __builtin_prefetch(&s);
    return s.key;
  }

  void clear() {
    for (Slot& s : slots_) s.key = kReservedId;
    size_ = 0;
  }

  void reserve(std::size_t n) {
    std::size_t want = 16;
    while (want * 7 < n * 10) want <<= 1;  // keep the load factor under 0.7
    if (want > slots_.size()) rehash(want);
  }

 private:
  struct Slot {
    FlowId key = kReservedId;
    FlowEntry entry;
  };
  static_assert(sizeof(Slot) == 32);

  std::size_t home(FlowId f) const {
    return (static_cast<std::uint32_t>(f * 2654435761u) >> shift_) & mask_;
  }

  void rehash(std::size_t cap) {
    std::vector<Slot> old = std::move(slots_);
    slots_ = std::vector<Slot>();
    slots_.reserve(cap);
#ifdef __linux__
    // ask for huge pages before first touch so big tables fault in 2M pages
    if (cap * sizeof(Slot) >= (4u << 20))
      madvise(slots_.data(), cap * sizeof(Slot), MADV_HUGEPAGE);
#endif
    slots_.resize(cap);
    mask_ = cap - 1;
    shift_ = 32;
    for (std::size_t c = cap; c > 1; c >>= 1) --shift_;
    size_ = 0;
    for (const Slot& s : old)
      if (s.key != kReservedId) insert(s.key, s.entry);
  }

  std::vector<Slot> slots_;
  std::size_t size_ = 0;
  std::size_t mask_ = 0;
  int shift_ = 28;
};

// Per-sender table, sharded by flow id so shards can be worked independently.
// The window sum is maintained per shard and summed on read.
class FlowTable {
 public:
  explicit FlowTable(std::size_t shard_count = 1) : shards_(shard_count ? shard_count : 1) {}

  enum class Admit { Admitted, NotAllowed, AlreadyPresent };

  void allow(FlowId f) { allowlist_.insert(f); }
  void set_allow_all(bool v) { allow_all_ = v; }
  bool allowed(FlowId f) const { return allow_all_ || allowlist_.count(f) != 0; }
  std::size_t allowlist_size() const { return allowlist_.size(); }

  FlowEntry* find(FlowId f) { return shard(f).entries.find(f); }
  const FlowEntry* find(FlowId f) const { return shard(f).entries.find(f); }
  FlowId prefetch(FlowId f) const { return shard(f).entries.prefetch(f); }

  // New entries start zeroed with T_A = now and W_R = the recomputed fair
  // share (B / N including this flow). Idempotent per source.
  Admit admit(FlowId f, PolicerParams& params, Tick now) {
    if (f == FlowEntryMap::kReservedId || !allowed(f)) return Admit::NotAllowed;
    auto& sh = shard(f);
    if (sh.entries.find(f) != nullptr) return Admit::AlreadyPresent;
    std::size_t n_after = size() + 1;
    std::size_t denom = std::max(n_after, params.expected_flows);
    double fair = params.bandwidth / static_cast<double>(denom);
    FlowEntry e;
    e.t_a = static_cast<std::uint32_t>(now);
    e.w_r = static_cast<float>(fair);
    sh.entries.insert(f, e);
    sh.window_sum += static_cast<double>(e.w_r);
    ++size_;
    params.fair_share = params.bandwidth / static_cast<double>(std::max(size_, params.expected_flows));
    return Admit::Admitted;
  }

  // Rewrites an entry's window keeping the shard sum consistent with the
  // stored (rounded) value.
  void set_window(FlowId f, FlowEntry& e, double new_window) {
    if (new_window < 0.0) new_window = 0.0;
    auto& sh = shard(f);
    float stored = static_cast<float>(new_window);
    sh.window_sum += static_cast<double>(stored) - static_cast<double>(e.w_r);
    e.w_r = stored;
  }

  std::size_t size() const { return size_; }

  double window_sum() const {
    double s = 0.0;
    for (const auto& sh : shards_) s += sh.window_sum;
    return s;
  }

  // Full re-sum over entries, used to cross-check the incremental total.
  double window_resum() const {
    double s = 0.0;
    for (const auto& sh : shards_)
      sh.entries.for_each([&s](FlowId, const FlowEntry& e) { s += static_cast<double>(e.w_r); });
    return s;
  }

  // Drops entries whose current period started more than idle_evict_periods
  // detection periods ago. Returns the number evicted.
  std::size_t evict_idle(Tick now, PolicerParams& params) {
    Tick horizon = params.detection_period * params.idle_evict_periods;
    std::size_t evicted = 0;
    std::vector<FlowId> victims;
    for (auto& sh : shards_) {
      victims.clear();
      double released = 0.0;
      sh.entries.for_each([&](FlowId f, const FlowEntry& e) {
        if (now - static_cast<Tick>(e.t_a) > horizon) {
          victims.push_back(f);
          released += static_cast<double>(e.w_r);
        }
      });
      for (FlowId f : victims) sh.entries.erase(f);
      sh.window_sum -= released;
      evicted += victims.size();
    }
    size_ -= evicted;
    if (evicted > 0 && size_ > 0) recompute_fair_share(*this, params);
    return evicted;
  }

  void clear() {
    for (auto& sh : shards_) {
      sh.entries.clear();
      sh.window_sum = 0.0;
    }
    size_ = 0;
  }

  void reserve(std::size_t n) {
    for (auto& sh : shards_) sh.entries.reserve(n / shards_.size() + 1);
  }

  template <typename F>
  void for_each(F&& fn) const {
    for (const auto& sh : shards_) sh.entries.for_each(fn);
  }

  std::size_t shard_count() const { return shards_.size(); }

  // Allowlist file: one source per line, dotted-quad or plain 32-bit integer,
  // '#' starts a comment. Returns parse errors, one per offending line.
  std::vector<std::string> load_allowlist(std::istream& in) {
    std::vector<std::string> errors;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::size_t b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      std::size_t e = line.find_last_not_of(" \t\r");
      auto id = parse_flow_id(std::string_view(line).substr(b, e - b + 1));
      if (!id) {
        errors.push_back("allowlist line " + std::to_string(lineno) + ": unparseable source '" +
                         line.substr(b, e - b + 1) + "'");
        continue;
      }
      allowlist_.insert(*id);
    }
    return errors;
  }

 private:
  struct Shard {
    FlowEntryMap entries;
    double window_sum = 0.0;
  };

  Shard& shard(FlowId f) { return shards_[f % shards_.size()]; }
  const Shard& shard(FlowId f) const { return shards_[f % shards_.size()]; }

  std::vector<Shard> shards_;
  std::unordered_set<FlowId> allowlist_;
  bool allow_all_ = false;
  std::size_t size_ = 0;
};

inline std::optional<double> recompute_fair_share(const FlowTable& table, PolicerParams& params) {
  std::size_t n = table.size();
  if (n == 0) return std::nullopt;
  params.fair_share =
      params.bandwidth / static_cast<double>(std::max(n, params.expected_flows));
  return params.fair_share;
}

}  // namespace parapet
