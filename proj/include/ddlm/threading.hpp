#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace ddlm {

/// Worker count: min(hardware, HALT_DIFFUSION_THREADS if set). At least 1.
inline int max_threads() {
  int hw = int(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("HALT_DIFFUSION_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return hw;
}

/// Static partition of [0, n) across workers. Each index is processed by a
/// fixed worker regardless of scheduling, so per-worker accumulators are
/// reproducible; callers merge them in worker order.
inline void parallel_for(int n, const std::function<void(int begin, int end, int worker)>& body) {
  int workers = std::min(max_threads(), std::max(n, 1));
  if (workers <= 1) {
    body(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    int b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e, w] { body(b, e, w); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ddlm
