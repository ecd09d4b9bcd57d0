// SPDX-License-Identifier: Apache-2.0
//
// Worker-count-invariant parallelism and compensated summation. Every
// ensemble reduction in this library follows the same recipe: workers
// compute independent per-index results into caller-owned slots, then a
// single sequential Kahan pass folds them in index order. Outputs are
// therefore bitwise identical for any worker count.

#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace gi {

/// Kahan compensated accumulator. Summation order is part of the
/// reproducibility contract; callers always add in a fixed index order.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0;
  double c_ = 0;
};

/// Sequential compensated total in index order.
double kahan_total(std::span<const double> values);

/// Resolves a requested worker count: 0 means one worker per hardware
/// thread. Does not consult the environment; the CLI dispatcher applies the
/// GHOSTSIM_WORKERS override before calling into the library.
unsigned resolve_workers(unsigned requested);

/// Runs body(i) for every i in [0, n) on `workers` threads. body(i) must
/// touch only state owned by index i.
void parallel_for_each_index(std::size_t n, unsigned workers,
                             const std::function<void(std::size_t)>& body);

}  // namespace gi
