// traffic.hpp -- per-tick offered load for every sender class: loss-reactive
// AIMD senders, flat-rate floods, on-off bursts, and the window-tracking
// adversary used to probe the rate limiter's upper bound.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "parapet/core.hpp"

namespace parapet {

enum class SenderKind : std::uint8_t {
  LegitAimd,
  FlatRate,
  OnOffShrew,
  CompliantAimd,
  Oracle,
};

inline bool is_attacker(SenderKind k) {
  return k == SenderKind::FlatRate || k == SenderKind::OnOffShrew ||
         k == SenderKind::CompliantAimd || k == SenderKind::Oracle;
}

struct SenderModel {
  FlowId id = 0;
  SenderKind kind = SenderKind::LegitAimd;
  double demand = 0.0;   // packets per tick; peak rate for on-off senders
  Tick rtt = 100;        // AIMD feedback timescale
  Tick on_len = 500;     // on-period length (on-off senders)
  double off_ratio = 0;  // off-period length / on-period length
  Tick phase = 0;        // start offset of the first on-period
  PacketKind emit_kind = PacketKind::Regular;
  std::uint16_t service_port = 0;
  bool allowlisted = true;
};

// What a sender learned about the previous tick.
struct Feedback {
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  double window_hint = 0.0;  // current rate limiting window; Oracle senders only
};

// Runtime state for one sender. AIMD senders ramp multiplicatively below
// ssthresh and add one packet-per-period every rtt above it. A loss event
// (at most one per rtt) backs off to half the rate, or straight down to the
// long-run delivery estimate when the sender was probing far above what the
// path carried; a second loss event hot on the heels of the first collapses
// to a sparse probe. Four loss-free rtts re-arm exponential probing toward
// full demand, standing in for RTO-plus-restart at flow granularity.
class SenderState {
 public:
  SenderState(const SenderModel& m, Tick detection_period, double loss_threshold)
      : model_(m),
        period_(detection_period),
        loss_threshold_(loss_threshold),
        min_rate_(0.1 / static_cast<double>(m.rtt)),
        rate_(std::min(m.demand, 1.0 / static_cast<double>(m.rtt))),
        ssthresh_(m.demand),
        cycle_(m.on_len + static_cast<Tick>(std::llround(m.off_ratio * static_cast<double>(m.on_len)))) {}

  const SenderModel& model() const { return model_; }
  double rate() const { return rate_; }

  // Packets to emit this tick given last tick's outcomes.
  std::uint32_t offered_load(Tick t, const Feedback& fb) {
    double target = 0.0;
    switch (model_.kind) {
      case SenderKind::FlatRate:
        target = model_.demand;
        break;
      case SenderKind::OnOffShrew:
        target = on_period(t) ? model_.demand : 0.0;
        break;
      case SenderKind::Oracle:
        target = std::min(model_.demand,
                          (1.0 + loss_threshold_) * fb.window_hint / static_cast<double>(period_));
        break;
      case SenderKind::LegitAimd:
      case SenderKind::CompliantAimd:
        aimd_step(t, fb);
        target = rate_;
        break;
    }
    acc_ += target;
    auto n = static_cast<std::uint32_t>(acc_);
    acc_ -= static_cast<double>(n);
    return n;
  }

  PacketRecord make_packet(Tick t) const {
    return PacketRecord{model_.id, t, model_.emit_kind, model_.service_port, kPacketBytes};
  }

 private:
  bool on_period(Tick t) const {
    if (t < model_.phase) return false;
    return (t - model_.phase) % cycle_ < model_.on_len;
  }

  void aimd_step(Tick t, const Feedback& fb) {
    double alpha = 1.0 / (50.0 * static_cast<double>(model_.rtt));
    goodput_ewma_ += alpha * (static_cast<double>(fb.delivered) - goodput_ewma_);
    if (fb.delivered > 0) last_delivery_ = t;
    if (fb.lost > 0) {
      last_loss_ = t;
      if (t >= cooldown_until_) {
        if (t - last_event_ <= 2 * model_.rtt)
          rate_ = min_rate_;  // back-to-back events: the path is gone, probe only
        else
          rate_ = std::min(rate_ / 2.0, std::max(goodput_ewma_, min_rate_));
        rate_ = std::min(std::max(rate_, min_rate_), model_.demand);
        ssthresh_ = rate_;
        last_event_ = t;
        cooldown_until_ = t + model_.rtt;
      }
      return;  // never grow on a lossy tick
    }
    if (t - last_delivery_ > 2 * model_.rtt) return;  // nothing acknowledged lately, hold
    if (t - last_loss_ >= 4 * model_.rtt) ssthresh_ = model_.demand;  // path looks clean again
    if (t < cooldown_until_) return;
    if (rate_ < ssthresh_) {
      rate_ = std::min(rate_ * std::exp2(1.0 / static_cast<double>(model_.rtt)), ssthresh_);
    } else {
      rate_ += 1.0 / (static_cast<double>(period_) * static_cast<double>(model_.rtt));
    }
    rate_ = std::min(rate_, model_.demand);
  }

  SenderModel model_;
  Tick period_;
  double loss_threshold_;
  double min_rate_;
  double rate_ = 0.0;
  double ssthresh_ = 0.0;
  double acc_ = 0.0;
  double goodput_ewma_ = 0.0;
  Tick cooldown_until_ = 0;
  Tick last_loss_ = std::numeric_limits<Tick>::min() / 2;
  Tick last_delivery_ = std::numeric_limits<Tick>::min() / 2;
  Tick last_event_ = std::numeric_limits<Tick>::min() / 2;
  Tick cycle_ = 1;
};

enum class RateDistribution : std::uint8_t { Uniform, Gaussian };

struct PopulationSpec {
  std::size_t n_legit = 0;
  std::size_t n_attack = 0;
  SenderKind attack_kind = SenderKind::FlatRate;
  double aggressiveness = 0.0;  // total attack rate / link capacity
  RateDistribution rate_distribution = RateDistribution::Uniform;
  double gaussian_std = 1.0;  // packets per tick
  double legit_demand = 0.0;  // packets per tick, per sender
  Tick rtt = 100;
  Tick on_len = 500;
  double off_ratio = 0.0;
  Tick phase_jitter = 0;

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (n_legit + n_attack < 1) v.push_back("population: n_legit + n_attack must be >= 1");
    if (aggressiveness < 0.0) v.push_back("population: aggressiveness must be >= 0");
    if (aggressiveness > 0.0 && n_attack == 0)
      v.push_back("population: aggressiveness > 0 requires n_attack > 0");
    if (n_legit > 0 && !(legit_demand > 0.0))
      v.push_back("population: legit_demand must be > 0");
    if (rtt <= 0) v.push_back("population: rtt must be > 0");
    if (on_len <= 0) v.push_back("population: on_len must be > 0");
    if (off_ratio < 0.0) v.push_back("population: off_ratio must be >= 0");
    if (gaussian_std < 0.0) v.push_back("population: gaussian_std must be >= 0");
    return v;
  }
};

// Ids 1..n_legit are legitimate senders, the next n_attack are attackers whose
// rates sum to aggressiveness * link_capacity (exactly for Uniform, up to
// clipping for Gaussian). Deterministic for a fixed seed.
inline std::vector<SenderModel> build_population(const PopulationSpec& spec, double link_capacity,
                                                 std::uint64_t seed) {
  auto violations = spec.validate();
  if (!violations.empty()) throw std::invalid_argument(violations.front());

  std::vector<SenderModel> out;
  out.reserve(spec.n_legit + spec.n_attack);
  FlowId next_id = 1;
  for (std::size_t i = 0; i < spec.n_legit; ++i) {
    SenderModel m;
    m.id = next_id++;
    m.kind = SenderKind::LegitAimd;
    m.demand = spec.legit_demand;
    m.rtt = spec.rtt;
    out.push_back(m);
  }

  std::mt19937_64 rng(seed);
  double total = spec.aggressiveness * link_capacity;
  double mean = spec.n_attack > 0 ? total / static_cast<double>(spec.n_attack) : 0.0;
  std::normal_distribution<double> gauss(mean, spec.gaussian_std);
  std::uniform_int_distribution<Tick> jitter(0, std::max<Tick>(0, spec.phase_jitter));

  for (std::size_t i = 0; i < spec.n_attack; ++i) {
    SenderModel m;
    m.id = next_id++;
    m.kind = spec.attack_kind;
    m.rtt = spec.rtt;
    m.demand = mean;
    if (spec.rate_distribution == RateDistribution::Gaussian)
      m.demand = std::max(0.0, gauss(rng));
    if (spec.attack_kind == SenderKind::OnOffShrew) {
      m.on_len = spec.on_len;
      m.off_ratio = spec.off_ratio;
      m.phase = spec.phase_jitter > 0 ? jitter(rng) : 0;
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace parapet
