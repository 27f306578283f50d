#include "emcad/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace emcad {

namespace {
constexpr std::size_t kMinWorkPerThread = 1 << 16;
}

int max_threads() {
  int cap = 0;
  if (const char *env = std::getenv("EMCAD_THREADS")) {
    try {
      cap = std::max(0, std::stoi(env));
    } catch (...) {
      cap = 0;
    }
  }
  if (cap == 0)
    cap = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return cap;
}

void parallel_for(std::size_t count, std::size_t work_per_item,
                  const std::function<void(std::size_t)> &body) {
  const std::size_t total = count * std::max<std::size_t>(1, work_per_item);
  std::size_t workers = std::min<std::size_t>(
      {static_cast<std::size_t>(max_threads()), count,
       total / kMinWorkPerThread + 1});
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1))
      body(i);
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t)
    pool.emplace_back(run);
  run();
}

} // namespace emcad
