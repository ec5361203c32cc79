// engine.hpp -- deterministic tick-driven simulation: senders feed the
// classifier, policed traffic shares the default queue, the weighted fair
// queuing link drains everything, and per-tick metrics are collected.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "parapet/core.hpp"
#include "parapet/flow_table.hpp"
#include "parapet/policer.hpp"
#include "parapet/scheduler.hpp"
#include "parapet/traffic.hpp"

namespace parapet {

struct ActivationConfig {
  double utilization_threshold = 0.9;
  double loss_threshold = 0.05;
  Tick hold_ticks = 50;
  std::optional<Tick> activate_at;  // forced start of policing; stays latched

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (!(utilization_threshold > 0.0 && utilization_threshold <= 1.0))
      v.push_back("activation: utilization_threshold must be in (0,1]");
    if (!(loss_threshold > 0.0 && loss_threshold < 1.0))
      v.push_back("activation: loss_threshold must be in (0,1)");
    if (hold_ticks < 1) v.push_back("activation: hold_ticks must be >= 1");
    return v;
  }
};

// Idle -> Active once utilization and loss both sit above their thresholds
// for hold_ticks straight ticks; the reverse transition needs both below for
// just as long. A forced activate_at overrides and latches.
class ActivationController {
 public:
  enum class State : std::uint8_t { Idle, Active };

  explicit ActivationController(const ActivationConfig& cfg) : cfg_(cfg) {}

  State step(double utilization, double loss, Tick t) {
    if (cfg_.activate_at) {
      state_ = t >= *cfg_.activate_at ? State::Active : State::Idle;
      return state_;
    }
    bool hot = utilization > cfg_.utilization_threshold && loss > cfg_.loss_threshold;
    bool cool = utilization < cfg_.utilization_threshold && loss < cfg_.loss_threshold;
    if (state_ == State::Idle) {
      streak_ = hot ? streak_ + 1 : 0;
      if (streak_ >= cfg_.hold_ticks) {
        state_ = State::Active;
        streak_ = 0;
      }
    } else {
      streak_ = cool ? streak_ + 1 : 0;
      if (streak_ >= cfg_.hold_ticks) {
        state_ = State::Idle;
        streak_ = 0;
      }
    }
    return state_;
  }

  State state() const { return state_; }

 private:
  ActivationConfig cfg_;
  State state_ = State::Idle;
  Tick streak_ = 0;
};

struct FairShareBound {
  double fair = 0.0;          // B / (N_L + N_A)
  double attacker_cap = 0.0;  // (1 + L_Th) * N_A * B / (N_L + N_A)
  double legit_floor = 0.0;   // (1 + L_Th) * B / (N_L + N_A)
};

inline FairShareBound fair_share_bound(std::size_t n_legit, std::size_t n_attack, double bandwidth,
                                       double loss_threshold) {
  if (n_legit + n_attack == 0) throw std::invalid_argument("fair_share_bound: no flows");
  double n = static_cast<double>(n_legit + n_attack);
  FairShareBound b;
  b.fair = bandwidth / n;
  b.attacker_cap = (1.0 + loss_threshold) * static_cast<double>(n_attack) * bandwidth / n;
  b.legit_floor = (1.0 + loss_threshold) * bandwidth / n;
  return b;
}

// Metric class of a sender: premium/udp are routing classes, the rest split
// by whether the sender is hostile.
enum class SenderClass : std::uint8_t { Legit, Attack, Premium, Udp };
inline constexpr std::size_t kClassCount = 4;

struct TimeSeriesRow {
  Tick t = 0;
  bool active = false;
  std::uint64_t offered[kClassCount] = {0, 0, 0, 0};
  std::uint64_t goodput[kClassCount] = {0, 0, 0, 0};
  std::uint64_t drop_window = 0;
  std::uint64_t drop_queue = 0;
  std::uint64_t drop_denied = 0;
  std::uint64_t drop_filter = 0;
  std::uint64_t queued = 0;
  double utilization = 0.0;
  double window_sum = 0.0;
  std::uint64_t flows = 0;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  Tick duration = 0;
  double tick_seconds = 0.01;
  SchedulerConfig scheduler;
  PolicerParams policer;
  std::size_t policer_queue_capacity = 0;  // default queue buffer override
  PopulationSpec population;
  std::vector<SenderModel> extra_senders;
  ActivationConfig activation;
  std::vector<FlowId> extra_allowlist;

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (duration <= 0) v.push_back("scenario: duration must be > 0");
    if (!(tick_seconds > 0.0)) v.push_back("scenario: tick_seconds must be > 0");
    auto append = [&v](std::vector<std::string> more) {
      v.insert(v.end(), more.begin(), more.end());
    };
    append(scheduler.validate());
    append(population.validate());
    append(activation.validate());
    // the policer's bandwidth is derived, so validate a copy with it filled in
    PolicerParams p = policer;
    int di = scheduler.queue_index(scheduler.default_queue);
    if (di >= 0)
      p.bandwidth = scheduler.queues[static_cast<std::size_t>(di)].weight *
                    scheduler.link_capacity * static_cast<double>(p.detection_period);
    append(p.validate());
    if (population.validate().empty()) {
      std::unordered_map<FlowId, int> seen;
      for (const auto& m : build_senders_nocheck()) {
        if (++seen[m.id] == 2) v.push_back("scenario: duplicate sender id " + std::to_string(m.id));
        if (m.demand < 0.0) v.push_back("scenario: sender demand must be >= 0");
      }
    }
    return v;
  }

  std::vector<SenderModel> build_senders_nocheck() const {
    std::vector<SenderModel> senders;
    if (population.n_legit + population.n_attack > 0)
      senders = build_population(population, scheduler.link_capacity, seed);
    for (const auto& m : extra_senders) senders.push_back(m);
    return senders;
  }
};

struct ScenarioError : std::runtime_error {
  explicit ScenarioError(std::vector<std::string> v)
      : std::runtime_error(join(v)), violations(std::move(v)) {}
  std::vector<std::string> violations;

  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid scenario:";
    for (const auto& e : v) {
      s += "\n  - ";
      s += e;
    }
    return s;
  }
};

struct PerSenderStats {
  std::uint64_t offered = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  std::uint64_t steady_delivered = 0;
};

struct RunResult {
  std::vector<TimeSeriesRow> rows;
  std::vector<SenderModel> senders;
  std::vector<SenderClass> sender_class;
  std::vector<PerSenderStats> per_sender;
  Tick steady_from = 0;
  std::optional<Tick> activated_at;
  bool conservation_ok = true;

  // per-detection-period delivered packets by class, aligned to t = 0
  std::vector<std::array<std::uint64_t, kClassCount>> period_goodput;

  // congestion-layer accounting
  double bandwidth_per_period = 0.0;  // B
  double bandwidth_per_tick = 0.0;
  std::size_t n_legit = 0;   // congestion-layer legit senders
  std::size_t n_attack = 0;  // congestion-layer attackers
  double final_window_sum = 0.0;
  std::uint64_t final_flows = 0;

  double steady_ticks() const {
    return static_cast<double>(rows.empty() ? 1 : rows.back().t + 1 - steady_from);
  }

  double steady_goodput_per_tick(SenderClass c) const {
    std::uint64_t sum = 0;
    for (const auto& r : rows)
      if (r.t >= steady_from) sum += r.goodput[static_cast<std::size_t>(c)];
    return static_cast<double>(sum) / steady_ticks();
  }

  double steady_offered_per_tick(SenderClass c) const {
    std::uint64_t sum = 0;
    for (const auto& r : rows)
      if (r.t >= steady_from) sum += r.offered[static_cast<std::size_t>(c)];
    return static_cast<double>(sum) / steady_ticks();
  }

  double sender_steady_goodput(std::size_t i) const {
    return static_cast<double>(per_sender[i].steady_delivered) / steady_ticks();
  }
};

class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    auto violations = cfg_.validate();
    if (!violations.empty()) throw ScenarioError(std::move(violations));
  }

  // Optional rate-limiting decision log sink: called as (tick, outcome).
  std::function<void(Tick, const DecisionOutcome&)> on_decision;

  RunResult run() {
    const SchedulerConfig& sc = cfg_.scheduler;
    const int default_q = sc.queue_index(sc.default_queue);

    WfqScheduler link(sc);
    if (cfg_.policer_queue_capacity > 0)
      link.queue(static_cast<std::size_t>(default_q)).set_capacity(cfg_.policer_queue_capacity);
    Classifier classifier(sc);

    PolicerParams params = cfg_.policer;
    params.bandwidth = sc.queues[static_cast<std::size_t>(default_q)].weight * sc.link_capacity *
                       static_cast<double>(params.detection_period);

    FlowTable table;
    CongestionPolicer policer(table, params, link.queue(static_cast<std::size_t>(default_q)));
    policer.on_decision = on_decision;

    RunResult res;
    res.senders = cfg_.build_senders_nocheck();
    res.bandwidth_per_period = params.bandwidth;
    res.bandwidth_per_tick = params.bandwidth / static_cast<double>(params.detection_period);
    res.steady_from = cfg_.duration - cfg_.duration / 5;

    // sender runtime state, id lookup, allowlist, metric classes
    std::vector<SenderState> senders;
    senders.reserve(res.senders.size());
    std::unordered_map<FlowId, std::uint32_t> index_of;
    for (const auto& m : res.senders) {
      senders.emplace_back(m, params.detection_period, params.loss_threshold);
      index_of.emplace(m.id, static_cast<std::uint32_t>(senders.size() - 1));
      if (m.allowlisted) table.allow(m.id);
    }
    for (FlowId f : cfg_.extra_allowlist) table.allow(f);

    std::unordered_set<FlowId> premium_sources;
    for (const auto& rule : sc.rules) {
      if (rule.action != ClassifierRule::Action::Queue || rule.mitigation_only) continue;
      int qi = sc.queue_index(rule.target_queue);
      if (qi >= 0 && sc.queues[static_cast<std::size_t>(qi)].dedicated)
        premium_sources.insert(rule.sources.begin(), rule.sources.end());
    }
    res.sender_class.reserve(res.senders.size());
    for (const auto& m : res.senders) {
      SenderClass c;
      if (premium_sources.count(m.id))
        c = SenderClass::Premium;
      else if (m.emit_kind == PacketKind::UdpService)
        c = SenderClass::Udp;
      else if (is_attacker(m.kind))
        c = SenderClass::Attack;
      else
        c = SenderClass::Legit;
      res.sender_class.push_back(c);
      if (c == SenderClass::Legit) ++res.n_legit;
      if (c == SenderClass::Attack) ++res.n_attack;
    }
    res.per_sender.assign(res.senders.size(), PerSenderStats{});

    ActivationController controller(cfg_.activation);
    bool active = controller.step(0.0, 0.0, 0) == ActivationController::State::Active;
    if (active) {
      policer.reset(table.allowlist_size());
      res.activated_at = 0;
    }

    std::vector<Feedback> fb_now(senders.size());
    std::vector<Feedback> fb_next(senders.size());
    std::vector<PacketRecord> delivered;
    std::vector<PacketRecord> spilled;
    res.rows.reserve(static_cast<std::size_t>(cfg_.duration));
    res.period_goodput.assign(
        static_cast<std::size_t>((cfg_.duration + params.detection_period - 1) /
                                 params.detection_period),
        {});
    std::uint64_t queued_prev = 0;

    for (Tick t = 0; t < cfg_.duration; ++t) {
      TimeSeriesRow row;
      row.t = t;
      row.active = active;

      // emission and admission/classification
      for (std::size_t i = 0; i < senders.size(); ++i) {
        Feedback& fb = fb_now[i];
        if (res.senders[i].kind == SenderKind::Oracle) {
          const FlowEntry* e = table.find(res.senders[i].id);
          fb.window_hint = e ? static_cast<double>(e->w_r) : policer.params().fair_share;
        }
        std::uint32_t n = senders[i].offered_load(t, fb);
        if (n == 0) continue;
        auto cls = static_cast<std::size_t>(res.sender_class[i]);
        row.offered[cls] += n;
        res.per_sender[i].offered += n;
        PacketRecord pkt = senders[i].make_packet(t);
        for (std::uint32_t k = 0; k < n; ++k) {
          auto route = classifier.route(pkt, active);
          if (route.blocked) {
            ++row.drop_filter;
            ++fb_next[i].lost;
            ++res.per_sender[i].lost;
            continue;
          }
          if (route.queue == default_q && active) {
            switch (policer.process_packet(pkt)) {
              case PacketOutcome::Enqueued:
              case PacketOutcome::SynQueued:
                break;
              case PacketOutcome::DroppedByWindow:
                ++row.drop_window;
                ++fb_next[i].lost;
                ++res.per_sender[i].lost;
                break;
              case PacketOutcome::DroppedByQueue:
                ++row.drop_queue;
                ++fb_next[i].lost;
                ++res.per_sender[i].lost;
                break;
              case PacketOutcome::Denied:
                ++row.drop_denied;
                ++fb_next[i].lost;
                ++res.per_sender[i].lost;
                break;
            }
          } else {
            if (!link.queue(static_cast<std::size_t>(route.queue)).push(pkt)) {
              ++row.drop_queue;
              ++fb_next[i].lost;
              ++res.per_sender[i].lost;
            }
          }
        }
      }

      if (active) {
        spilled.clear();
        policer.service_syn_queue(&spilled);
        for (const auto& pkt : spilled) {
          ++row.drop_queue;
          auto it = index_of.find(pkt.source);
          if (it != index_of.end()) {
            ++fb_next[it->second].lost;
            ++res.per_sender[it->second].lost;
          }
        }
        if (t > 0 && t % params.detection_period == 0) policer.evict_idle(t);
      }

      // link service
      delivered.clear();
      auto served = link.serve_tick(delivered);
      for (const auto& pkt : delivered) {
        auto it = index_of.find(pkt.source);
        if (it == index_of.end()) continue;  // promoted handshake traffic only
        std::size_t i = it->second;
        auto cls = static_cast<std::size_t>(res.sender_class[i]);
        row.goodput[cls] += 1;
        ++fb_next[i].delivered;
        ++res.per_sender[i].delivered;
        if (t >= res.steady_from) ++res.per_sender[i].steady_delivered;
        res.period_goodput[static_cast<std::size_t>(t / params.detection_period)][cls] += 1;
      }

      // metrics, conservation, controller
      std::uint64_t queued = link.backlog() + policer.syn_queue().size();
      std::uint64_t offered_total = 0;
      std::uint64_t goodput_total = 0;
      for (std::size_t c = 0; c < kClassCount; ++c) {
        offered_total += row.offered[c];
        goodput_total += row.goodput[c];
      }
      std::uint64_t drops_total = row.drop_window + row.drop_queue + row.drop_denied + row.drop_filter;
      if (offered_total + queued_prev != goodput_total + drops_total + queued)
        res.conservation_ok = false;

      row.queued = queued;
      row.utilization = static_cast<double>(served.total) / sc.link_capacity;
      row.window_sum = table.window_sum();
      row.flows = table.size();
      res.rows.push_back(row);
      queued_prev = queued;

      double loss_frac =
          offered_total > 0 ? static_cast<double>(drops_total) / static_cast<double>(offered_total)
                            : 0.0;
      bool next_active =
          controller.step(row.utilization, loss_frac, t + 1) == ActivationController::State::Active;
      if (next_active && !active) {
        policer.reset(table.allowlist_size());
        if (!res.activated_at) res.activated_at = t + 1;
        logging::debug("policer active at tick %lld", static_cast<long long>(t + 1));
      } else if (!next_active && active) {
        policer.reset(0);
        logging::debug("policer idle at tick %lld", static_cast<long long>(t + 1));
      }
      active = next_active;

      std::swap(fb_now, fb_next);
      for (auto& f : fb_next) f = Feedback{};
    }

    res.final_window_sum = table.window_sum();
    res.final_flows = table.size();
    return res;
  }

  const ScenarioConfig& config() const { return cfg_; }

 private:
  ScenarioConfig cfg_;
};

// CSV with one row per tick; schema documented in the README.
inline void write_timeseries_csv(const RunResult& res, std::ostream& out) {
  out << "t,active,offered_legit,offered_attack,offered_premium,offered_udp,"
         "goodput_legit,goodput_attack,goodput_premium,goodput_udp,"
         "drop_window,drop_queue,drop_denied,drop_filter,queued,utilization,window_sum,flows\n";
  char buf[64];
  for (const auto& r : res.rows) {
    out << r.t << ',' << (r.active ? 1 : 0);
    for (auto v : r.offered) out << ',' << v;
    for (auto v : r.goodput) out << ',' << v;
    out << ',' << r.drop_window << ',' << r.drop_queue << ',' << r.drop_denied << ','
        << r.drop_filter << ',' << r.queued;
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g,", r.utilization, r.window_sum);
    out << buf << r.flows << '\n';
  }
}

}  // namespace parapet
