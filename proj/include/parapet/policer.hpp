// policer.hpp -- congestion-resolving layer: per-packet window enforcement,
// detection-period rollover and the rate limiting decision, SYN handling.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "parapet/core.hpp"
#include "parapet/flow_table.hpp"

namespace parapet {

enum class PacketOutcome : std::uint8_t {
  Enqueued,
  DroppedByWindow,
  DroppedByQueue,
  Denied,
  SynQueued,
};

struct DecisionOutcome {
  FlowId flow = 0;
  double old_window = 0.0;
  double new_window = 0.0;
  double packet_loss = 0.0;
  bool halved = false;
};

// Runs once per detection period for a flow. recentLoss is P_D/P_R (0 on an
// empty period); packetLoss folds in previous losses with weight lambda. A
// flow is halved only when it both lost too much and sent more than the fair
// share; everyone else is reassigned its proportional slice of B.
inline DecisionOutcome rate_limiting_decision(FlowEntry& e, FlowId f, FlowTable& table,
                                              const PolicerParams& params) {
  double recent_loss = e.p_r > 0 ? static_cast<double>(e.p_d) / static_cast<double>(e.p_r) : 0.0;
  double packet_loss = params.lambda * e.l_r + (1.0 - params.lambda) * recent_loss;
  double old_window = static_cast<double>(e.w_r);
  e.l_r = packet_loss;
  bool halve = packet_loss > params.loss_threshold &&
               static_cast<double>(e.p_r) > params.fair_share;
  double new_window;
  if (halve) {
    new_window = old_window / 2.0;
  } else {
    double total = table.window_sum();
    new_window = total > 0.0 ? (old_window / total) * params.bandwidth : params.fair_share;
  }
  table.set_window(f, e, new_window);
  return DecisionOutcome{f, old_window, static_cast<double>(e.w_r), packet_loss, halve};
}

// Closes the period that t0 falls outside of: decide on the finished counters,
// restart the period at t0 with zeroed counters. Exactly one decision fires no
// matter how many whole periods went by idle.
inline DecisionOutcome rollover_period(FlowEntry& e, FlowId f, FlowTable& table,
                                       const PolicerParams& params, Tick t0) {
  DecisionOutcome d = rate_limiting_decision(e, f, table, params);
  e.t_a = static_cast<std::uint32_t>(t0);
  e.p_r = 0;
  e.p_d = 0;
  return d;
}

// Standalone FIFO service queue drained at a fixed packet rate, for use when
// the policer runs outside a scheduler.
struct CongestionQueue {
  PacketQueue fifo;
  double drain_rate = 0.0;  // packets per tick
  double credit = 0.0;

  CongestionQueue() = default;
  CongestionQueue(std::size_t capacity, double rate) : fifo(capacity), drain_rate(rate) {}

  // Removes up to drain_rate * budget_ticks packets in FIFO order.
  std::vector<PacketRecord> drain(Tick budget_ticks) {
    std::vector<PacketRecord> out;
    credit += drain_rate * static_cast<double>(budget_ticks);
    auto n = static_cast<std::uint64_t>(credit);
    while (n > 0 && !fifo.empty()) {
      out.push_back(*fifo.pop());
      --n;
    }
    credit -= static_cast<double>(out.size());
    if (fifo.empty()) credit = 0.0;  // no banking across idle spells
    return out;
  }
};

// Algorithm state for the congestion layer. The service queue is borrowed:
// inside the simulator it is the scheduler's default queue, in isolation a
// CongestionQueue's fifo.
class CongestionPolicer {
 public:
  CongestionPolicer(FlowTable& table, PolicerParams params, PacketQueue& service_queue)
      : table_(table), params_(params), qc_(&service_queue) {
    std::size_t syn_cap =
        std::max<std::size_t>(16, static_cast<std::size_t>(syn_rate() * 20.0));
    syn_queue_.set_capacity(syn_cap);
    if (params_.fair_share <= 0.0) params_.fair_share = params_.bandwidth;
  }

  // Per-packet path. Period rollover runs first so the packet lands in the
  // period it belongs to; then the window check, then the service queue.
  PacketOutcome process_packet(const PacketRecord& pkt) {
    FlowEntry* e = table_.find(pkt.source);
    if (e == nullptr) {
      if (table_.admit(pkt.source, params_, pkt.arrival) == FlowTable::Admit::Admitted) {
        e = table_.find(pkt.source);
      } else if (pkt.kind == PacketKind::Syn) {
        return syn_queue_.push(pkt) ? PacketOutcome::SynQueued : PacketOutcome::DroppedByQueue;
      } else {
        return PacketOutcome::Denied;
      }
    }
    if (pkt.arrival > static_cast<Tick>(e->t_a) + params_.detection_period) {
      DecisionOutcome d = rollover_period(*e, pkt.source, table_, params_, pkt.arrival);
      if (on_decision) on_decision(pkt.arrival, d);
    }
    e->p_r += 1;
    if (static_cast<double>(e->p_r) > std::floor(static_cast<double>(e->w_r))) {
      e->p_d += 1;
      return PacketOutcome::DroppedByWindow;
    }
    if (!qc_->push(pkt)) {
      e->p_d += 1;
      return PacketOutcome::DroppedByQueue;
    }
    return PacketOutcome::Enqueued;
  }

  // Moves queued SYNs into the service queue at the bounded budget
  // (syn_budget_fraction of B). Returns how many moved; packets that found
  // the service queue full are appended to spilled when given.
  std::size_t service_syn_queue(std::vector<PacketRecord>* spilled = nullptr) {
    syn_credit_ += syn_rate();
    auto n = static_cast<std::uint64_t>(syn_credit_);
    std::size_t moved = 0;
    while (n > 0 && !syn_queue_.empty()) {
      PacketRecord p = *syn_queue_.pop();
      if (!qc_->push(p) && spilled) spilled->push_back(p);
      ++moved;
      --n;
    }
    syn_credit_ -= static_cast<double>(moved);
    if (syn_queue_.empty()) syn_credit_ = 0.0;
    return moved;
  }

  // Handshake completed (signaled by the embedding system): the source
  // becomes admissible and gets a table entry.
  FlowTable::Admit promote(FlowId f, Tick now) {
    table_.allow(f);
    return table_.admit(f, params_, now);
  }

  double syn_rate() const {
    return params_.syn_budget_fraction * params_.bandwidth /
           static_cast<double>(params_.detection_period);
  }

  void reset(std::size_t expected_flows) {
    table_.clear();
    syn_queue_.clear();
    syn_credit_ = 0.0;
    params_.expected_flows = expected_flows;
    params_.fair_share = params_.bandwidth /
                         static_cast<double>(std::max<std::size_t>(1, expected_flows));
  }

  std::size_t evict_idle(Tick now) { return table_.evict_idle(now, params_); }

  PolicerParams& params() { return params_; }
  const PolicerParams& params() const { return params_; }
  FlowTable& table() { return table_; }
  PacketQueue& syn_queue() { return syn_queue_; }

  // Optional per-decision sink: (tick, outcome).
  std::function<void(Tick, const DecisionOutcome&)> on_decision;

 private:
  FlowTable& table_;
  PolicerParams params_;
  PacketQueue* qc_;
  PacketQueue syn_queue_;
  double syn_credit_ = 0.0;
};

}  // namespace parapet
