// SPDX-License-Identifier: Apache-2.0

#include "gi/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gi {

double kahan_total(std::span<const double> values) {
  KahanSum sum;
  for (double v : values) sum.add(v);
  return sum.value();
}

unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void parallel_for_each_index(std::size_t n, unsigned workers,
                             const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  const std::size_t w =
      std::min<std::size_t>(std::max<unsigned>(workers, 1), n);
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  const std::size_t chunk = std::max<std::size_t>(1, n / (w * 8));
  std::mutex error_mutex;
  std::exception_ptr error;

  auto drain = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(chunk);
      if (begin >= n) return;
      const std::size_t end = std::min(n, begin + chunk);
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t t = 0; t < w; ++t) pool.emplace_back(drain);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace gi
