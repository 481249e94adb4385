#include "nfb/parallel.h"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace nfb {
namespace {

std::atomic<std::size_t> g_max_threads{0};

}  // namespace

void SetMaxThreads(std::size_t n) { g_max_threads.store(n); }

std::size_t MaxThreads() {
  const std::size_t n = g_max_threads.load();
  if (n != 0) return n;
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void ParallelFor(std::size_t count, std::size_t min_chunk,
                 const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  min_chunk = std::max<std::size_t>(1, min_chunk);
  const std::size_t workers =
      std::min(MaxThreads(), (count + min_chunk - 1) / min_chunk);
  if (workers <= 1) {
    fn(0, count);
    return;
  }
  const std::size_t chunk = (count + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(count, chunk));
  for (auto& t : threads) t.join();
}

}  // namespace nfb
