// scheduler.hpp -- static classifiers plus a work-conserving weighted fair
// queuing link with per-queue buffers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "parapet/core.hpp"

namespace parapet {

struct QueueSpec {
  std::string name;
  double weight = 0.0;             // normalized, all weights sum to 1
  std::size_t buffer_capacity = 0; // packets; 0 means "derive from weight"
  bool dedicated = false;          // reserved (premium) queue
};

struct ClassifierRule {
  enum class Action : std::uint8_t { Queue, Block };

  std::optional<PacketKind> kind;
  std::optional<std::uint16_t> port;        // only checked for UdpService
  std::unordered_set<FlowId> sources;       // empty = any source
  Action action = Action::Queue;
  std::string target_queue;
  bool mitigation_only = false;  // skipped while traffic policing is idle

  bool matches(const PacketRecord& p) const {
    if (kind && p.kind != *kind) return false;
    if (port && p.service_port != *port) return false;
    if (!sources.empty() && sources.count(p.source) == 0) return false;
    return true;
  }
};

struct SchedulerConfig {
  std::vector<QueueSpec> queues;
  std::vector<ClassifierRule> rules;  // declared order; first match wins
  std::string default_queue;
  double link_capacity = 0.0;  // packets per tick

  int queue_index(const std::string& name) const {
    for (std::size_t i = 0; i < queues.size(); ++i)
      if (queues[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (queues.empty()) v.push_back("scheduler: at least one queue is required");
    double wsum = 0.0;
    std::unordered_set<std::string> names;
    for (const auto& q : queues) {
      wsum += q.weight;
      if (!(q.weight > 0.0 && q.weight <= 1.0))
        v.push_back("scheduler: queue '" + q.name + "' weight must be in (0,1]");
      if (!names.insert(q.name).second)
        v.push_back("scheduler: duplicate queue name '" + q.name + "'");
    }
    if (!queues.empty() && std::fabs(wsum - 1.0) > 1e-9)
      v.push_back("scheduler: queue weights must sum to 1 (got " + std::to_string(wsum) + ")");
    if (queue_index(default_queue) < 0)
      v.push_back("scheduler: default_queue '" + default_queue + "' names no queue");
    for (const auto& r : rules)
      if (r.action == ClassifierRule::Action::Queue && queue_index(r.target_queue) < 0)
        v.push_back("scheduler: rule target '" + r.target_queue + "' names no queue");
    if (!(link_capacity >= 1.0 / 500.0))
      v.push_back("scheduler: link_capacity must be positive");
    return v;
  }
};

// First-match routing over the declared rules with an implicit trailing
// default. Block drops the packet before any queue.
class Classifier {
 public:
  struct Route {
    bool blocked = false;
    int queue = -1;
  };

  Classifier() = default;
  Classifier(const SchedulerConfig& cfg)
      : rules_(cfg.rules), default_index_(cfg.queue_index(cfg.default_queue)) {
    targets_.reserve(rules_.size());
    for (const auto& r : rules_) targets_.push_back(cfg.queue_index(r.target_queue));
  }

  Route route(const PacketRecord& p, bool mitigation_active) const {
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      if (rules_[i].mitigation_only && !mitigation_active) continue;
      if (!rules_[i].matches(p)) continue;
      if (rules_[i].action == ClassifierRule::Action::Block) return Route{true, -1};
      return Route{false, targets_[i]};
    }
    return Route{false, default_index_};
  }

 private:
  std::vector<ClassifierRule> rules_;
  std::vector<int> targets_;
  int default_index_ = -1;
};

// Queue name or nullptr for Block; mirrors the routing the simulator uses.
inline const std::string* classify(const SchedulerConfig& cfg, const PacketRecord& p,
                                   bool mitigation_active = true) {
  Classifier c(cfg);
  auto r = c.route(p, mitigation_active);
  if (r.blocked) return nullptr;
  return &cfg.queues[static_cast<std::size_t>(r.queue)].name;
}

// Packet-quantum weighted fair queuing. Each queue carries a service ledger
// anchored at the start of its backlogged period: entitlement weight*budget
// accrues per backlogged tick, every transmitted packet settles one unit, and
// the ledger resets when the queue drains. Guaranteed capacity goes to the
// most indebted queue first, leftover capacity is redistributed across
// backlogged queues in proportion to weight, so the link idles only when all
// queues are empty. While a queue stays backlogged its cumulative service
// never falls more than one packet behind weight*capacity*T.
class WfqScheduler {
 public:
  struct ServeResult {
    std::vector<std::uint32_t> per_queue;
    std::uint32_t budget = 0;
    std::uint32_t total = 0;
  };

  explicit WfqScheduler(const SchedulerConfig& cfg) : specs_(cfg.queues), capacity_(cfg.link_capacity) {
    queues_.reserve(specs_.size());
    for (auto& s : specs_) {
      std::size_t cap = s.buffer_capacity;
      if (cap == 0) {
        // 200 ms of buffering at the queue's weighted rate
        cap = std::max<std::size_t>(4, static_cast<std::size_t>(s.weight * capacity_ * 20.0));
        s.buffer_capacity = cap;
      }
      queues_.emplace_back(cap);
    }
    ledger_.assign(specs_.size(), 0.0);
  }

  PacketQueue& queue(std::size_t i) { return queues_[i]; }
  const PacketQueue& queue(std::size_t i) const { return queues_[i]; }
  const QueueSpec& spec(std::size_t i) const { return specs_[i]; }
  std::size_t queue_count() const { return queues_.size(); }
  double link_capacity() const { return capacity_; }

  std::size_t backlog() const {
    std::size_t n = 0;
    for (const auto& q : queues_) n += q.size();
    return n;
  }

  // Serves one tick of link capacity; transmitted packets are appended to out
  // in service order.
  ServeResult serve_tick(std::vector<PacketRecord>& out) {
    credit_ += capacity_;
    auto budget = static_cast<std::uint32_t>(credit_);
    credit_ -= static_cast<double>(budget);

    ServeResult r;
    r.per_queue.assign(queues_.size(), 0);
    r.budget = budget;
    std::uint32_t remaining = budget;

    // entitlement accrues only while backlogged
    for (std::size_t i = 0; i < queues_.size(); ++i) {
      if (queues_[i].empty())
        ledger_[i] = 0.0;
      else
        ledger_[i] -= specs_[i].weight * static_cast<double>(budget);
    }

    // guaranteed share: most indebted first until nobody is behind
    while (remaining > 0) {
      int best = -1;
      for (std::size_t i = 0; i < queues_.size(); ++i) {
        if (queues_[i].empty() || ledger_[i] >= 0.0) continue;
        if (best < 0 || ledger_[i] < ledger_[static_cast<std::size_t>(best)])
          best = static_cast<int>(i);
      }
      if (best < 0) break;
      transmit(static_cast<std::size_t>(best), out, r);
      --remaining;
    }

    // work conservation: redistribute leftover capacity by weight
    while (remaining > 0) {
      double wsum = 0.0;
      std::size_t backlogged = 0;
      for (std::size_t i = 0; i < queues_.size(); ++i) {
        if (!queues_[i].empty()) {
          wsum += specs_[i].weight;
          ++backlogged;
        }
      }
      if (backlogged == 0) break;

      std::uint32_t granted = 0;
      std::vector<std::pair<double, std::size_t>> frac;
      frac.reserve(backlogged);
      for (std::size_t i = 0; i < queues_.size() && remaining > granted; ++i) {
        if (queues_[i].empty()) continue;
        double share = static_cast<double>(remaining) * specs_[i].weight / wsum;
        auto give = static_cast<std::uint32_t>(share);
        give = std::min<std::uint32_t>(
            {give, static_cast<std::uint32_t>(queues_[i].size()), remaining - granted});
        for (std::uint32_t k = 0; k < give; ++k) transmit(i, out, r);
        granted += give;
        frac.emplace_back(share - static_cast<double>(give), i);
      }
      // hand out the rounding residue one packet at a time
      std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (const auto& [f, i] : frac) {
        if (granted >= remaining) break;
        if (queues_[i].empty()) continue;
        transmit(i, out, r);
        ++granted;
      }
      if (granted == 0) break;  // nothing left that can take the residue
      remaining -= granted;
    }

    r.total = budget - remaining;
    return r;
  }

 private:
  void transmit(std::size_t i, std::vector<PacketRecord>& out, ServeResult& r) {
    out.push_back(*queues_[i].pop());
    r.per_queue[i] += 1;
    ledger_[i] += 1.0;
    if (queues_[i].empty()) ledger_[i] = 0.0;  // drained: its period is over
  }

  std::vector<QueueSpec> specs_;
  std::vector<PacketQueue> queues_;
  std::vector<double> ledger_;  // service minus entitlement, current period
  double capacity_ = 0.0;
  double credit_ = 0.0;
};

}  // namespace parapet
