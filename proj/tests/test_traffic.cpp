#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "parapet/traffic.hpp"

using namespace parapet;

namespace {
SenderModel model(SenderKind kind, double demand, Tick rtt = 10) {
  SenderModel m;
  m.id = 1;
  m.kind = kind;
  m.demand = demand;
  m.rtt = rtt;
  return m;
}
}  // namespace

TEST_CASE("shrew schedule alternates on and off periods") {
  SenderModel m = model(SenderKind::OnOffShrew, 4.0);
  m.on_len = 500;
  m.off_ratio = 1.0;
  SenderState s(m, 500, 0.05);
  Feedback none;
  std::uint64_t first_on = 0, off = 0, second_on = 0;
  for (Tick t = 0; t < 1500; ++t) {
    auto n = s.offered_load(t, none);
    if (t < 500)
      first_on += n;
    else if (t < 1000)
      off += n;
    else
      second_on += n;
  }
  CHECK(first_on == 2000);
  CHECK(off == 0);
  CHECK(second_on == 2000);
}

TEST_CASE("shrew duty cycle is exactly 1/(1+R) over whole cycles") {
  for (double r : {0.0, 2.0, 6.0, 18.0}) {
    SenderModel m = model(SenderKind::OnOffShrew, 2.0);
    m.on_len = 100;
    m.off_ratio = r;
    SenderState s(m, 500, 0.05);
    Feedback none;
    Tick cycle = static_cast<Tick>(100 * (1 + r));
    std::uint64_t sent = 0;
    for (Tick t = 0; t < 5 * cycle; ++t) sent += s.offered_load(t, none);
    CHECK(sent == static_cast<std::uint64_t>(5 * 100 * 2));  // demand only while on
  }
}

TEST_CASE("flat-rate senders ignore feedback entirely") {
  SenderState s(model(SenderKind::FlatRate, 3.0), 500, 0.05);
  Feedback punished;
  punished.lost = 1000;
  std::uint64_t sent = 0;
  for (Tick t = 0; t < 1000; ++t) sent += s.offered_load(t, punished);
  CHECK(sent == 3000);
}

TEST_CASE("oracle tracks its window at (1+L_Th) times the allowed rate") {
  SenderState s(model(SenderKind::Oracle, 100.0), 500, 0.05);
  Feedback fb;
  fb.window_hint = 100.0;  // packets per period
  // 1.05 * 100 / 500 = 0.21 packets per tick, exact up to the accumulator
  std::uint64_t sent = 0;
  for (Tick t = 0; t < 100; ++t) sent += s.offered_load(t, fb);
  CHECK(sent >= 20);
  CHECK(sent <= 21);
  for (Tick t = 100; t < 10'000; ++t) sent += s.offered_load(t, fb);
  CHECK(sent >= 2099);
  CHECK(sent <= 2100);
}

TEST_CASE("aimd slow start reaches demand and holds without loss") {
  SenderState s(model(SenderKind::LegitAimd, 50.0, 5), 500, 0.05);
  Feedback fb;
  bool reached = false;
  for (Tick t = 0; t < 400; ++t) {
    auto n = s.offered_load(t, fb);
    fb = Feedback{};
    fb.delivered = n;  // everything delivered, nothing lost
    if (s.rate() >= 50.0) reached = true;
  }
  CHECK(reached);
  CHECK(s.rate() == 50.0);
}

TEST_CASE("aimd halves on loss and never grows on a lossy tick") {
  SenderModel m = model(SenderKind::CompliantAimd, 64.0, 10);
  SenderState s(m, 500, 0.05);
  // drive to full demand
  Feedback fb;
  for (Tick t = 0; t < 2000; ++t) {
    auto n = s.offered_load(t, fb);
    fb = Feedback{};
    fb.delivered = n;
  }
  REQUIRE(s.rate() == 64.0);

  Feedback lossy;
  lossy.delivered = 10;
  lossy.lost = 3;
  s.offered_load(2000, lossy);
  CHECK(s.rate() == 32.0);

  // a second loss within the same rtt is one loss event
  s.offered_load(2001, lossy);
  CHECK(s.rate() == 32.0);

  std::mt19937_64 rng(5);
  double prev = s.rate();
  for (Tick t = 2002; t < 2500; ++t) {
    Feedback f;
    f.delivered = rng() % 8;
    f.lost = rng() % 3;
    s.offered_load(t, f);
    if (f.lost > 0) CHECK(s.rate() <= prev);
    CHECK(s.rate() <= 64.0);
    prev = s.rate();
  }
}

TEST_CASE("fractional emission keeps the long-run rate exact") {
  SenderState s(model(SenderKind::FlatRate, 0.37), 500, 0.05);
  Feedback none;
  std::uint64_t sent = 0;
  for (Tick t = 0; t < 100'000; ++t) sent += s.offered_load(t, none);
  // exact up to the one packet still sitting in the accumulator
  CHECK(sent >= 36'999);
  CHECK(sent <= 37'000);
}

TEST_CASE("population: uniform attacker rates sum to the aggressiveness target") {
  PopulationSpec spec;
  spec.n_attack = 4;
  spec.aggressiveness = 2.0;
  auto senders = build_population(spec, 100.0, 1);
  REQUIRE(senders.size() == 4);
  for (const auto& m : senders) {
    CHECK(m.kind == SenderKind::FlatRate);
    CHECK(m.demand == 50.0);
  }
}

TEST_CASE("population: legitimate-only build") {
  PopulationSpec spec;
  spec.n_legit = 3;
  spec.legit_demand = 7.0;
  auto senders = build_population(spec, 100.0, 1);
  REQUIRE(senders.size() == 3);
  for (const auto& m : senders) CHECK(m.kind == SenderKind::LegitAimd);
  CHECK(senders[0].id == 1);
  CHECK(senders[2].id == 3);
}

TEST_CASE("population: attack volume without attackers is rejected") {
  PopulationSpec spec;
  spec.n_legit = 1;
  spec.legit_demand = 1.0;
  spec.aggressiveness = 2.0;
  CHECK_FALSE(spec.validate().empty());
  CHECK_THROWS_AS(build_population(spec, 100.0, 1), std::invalid_argument);
}

TEST_CASE("population: gaussian rates land within 2% of the target across seeds") {
  // sampling noise: sd of the sum is sqrt(500) ~ 22 packets, well inside 2%
  // of the 10k target
  PopulationSpec spec;
  spec.n_attack = 500;
  spec.aggressiveness = 2.0;
  spec.rate_distribution = RateDistribution::Gaussian;
  spec.gaussian_std = 1.0;
  const double target = 2.0 * 5000.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto senders = build_population(spec, 5000.0, seed);
    double sum = 0.0;
    for (const auto& m : senders) {
      REQUIRE(m.demand >= 0.0);
      sum += m.demand;
    }
    CHECK(std::fabs(sum - target) <= 0.02 * target);
  }
}

TEST_CASE("population: fixed seed reproduces byte-identical rates") {
  PopulationSpec spec;
  spec.n_attack = 50;
  spec.aggressiveness = 1.0;
  spec.rate_distribution = RateDistribution::Gaussian;
  auto a = build_population(spec, 500.0, 42);
  auto b = build_population(spec, 500.0, 42);
  auto c = build_population(spec, 500.0, 43);
  REQUIRE(a.size() == b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].demand == b[i].demand);
    if (a[i].demand != c[i].demand) differs = true;
  }
  CHECK(differs);
}
