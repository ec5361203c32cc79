// support.hpp -- test-only oracles and drivers, independent of the library's
// implementation paths.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace testsupport {

// Continuous GPS water-fill: splits budget among backlogged queues in
// proportion to weight, capping each at its backlog and redistributing the
// excess until the budget or the backlog runs out.
inline std::vector<double> water_fill(const std::vector<double>& backlog,
                                      const std::vector<double>& weight, double budget) {
  std::size_t n = backlog.size();
  std::vector<double> alloc(n, 0.0);
  std::vector<bool> open(n);
  for (std::size_t i = 0; i < n; ++i) open[i] = backlog[i] > 0.0;
  double left = budget;
  for (int guard = 0; guard < 64 && left > 1e-12; ++guard) {
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (open[i]) wsum += weight[i];
    if (wsum <= 0.0) break;
    bool capped = false;
    double used = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!open[i]) continue;
      double give = left * weight[i] / wsum;
      double room = backlog[i] - alloc[i];
      if (give >= room) {
        give = room;
        open[i] = false;
        capped = true;
      }
      alloc[i] += give;
      used += give;
    }
    left -= used;
    if (!capped) break;  // proportional split fit everyone
  }
  return alloc;
}

// Deterministic bursty arrival generator for scheduler property tests.
struct ArrivalProcess {
  double rate_on = 0.0;  // packets per tick while bursting
  int on_len = 0;
  int off_len = 0;
  double acc = 0.0;
  int phase = 0;

  std::uint32_t step() {
    int cycle = on_len + off_len;
    bool on = cycle == 0 || (phase % cycle) < on_len;
    ++phase;
    if (on) acc += rate_on;
    auto n = static_cast<std::uint32_t>(acc);
    acc -= n;
    return n;
  }
};

}  // namespace testsupport
