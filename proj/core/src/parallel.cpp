#include "zonalnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <thread>
#include <vector>

namespace zonalnet::parallel {

namespace {

int read_env_budget() {
  const char* env = std::getenv("ZONALNET_THREADS");
  if (env == nullptr) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

std::atomic<int>& budget_slot() {
  static std::atomic<int> budget{read_env_budget()};
  return budget;
}

}  // namespace

int thread_budget() { return budget_slot().load(std::memory_order_relaxed); }

void set_thread_budget(int n) {
  if (n < 1) throw std::invalid_argument("set_thread_budget: need at least one thread");
  budget_slot().store(n, std::memory_order_relaxed);
}

void parallel_for(std::int64_t begin, std::int64_t end, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn) {
  if (begin >= end) return;
  const std::int64_t range = end - begin;
  if (grain < 1) grain = 1;
  const int budget = thread_budget();
  const std::int64_t max_chunks = (range + grain - 1) / grain;
  const std::int64_t n_workers = std::min<std::int64_t>(budget, max_chunks);
  if (n_workers <= 1) {
    fn(begin, end);
    return;
  }
  // Contiguous near-equal chunks, one per worker.
  const std::int64_t base = range / n_workers;
  const std::int64_t extra = range % n_workers;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(n_workers));
  std::int64_t cursor = begin;
  for (std::int64_t w = 0; w < n_workers; ++w) {
    const std::int64_t len = base + (w < extra ? 1 : 0);
    const std::int64_t c0 = cursor;
    const std::int64_t c1 = cursor + len;
    cursor = c1;
    workers.emplace_back([&fn, c0, c1] { fn(c0, c1); });
  }
  for (auto& t : workers) t.join();
}

}  // namespace zonalnet::parallel
