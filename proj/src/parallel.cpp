#include "qhm/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace qhm {

static std::atomic<int> g_threads{0};

void set_threads(int n) { g_threads = std::max(0, n); }

int threads() {
  int n = g_threads.load();
  if (n > 0)
    return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  int nt = std::min<std::size_t>(threads(), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex m;
  auto work = [&] {
    for (;;) {
      std::size_t i = next++;
      if (i >= n)
        return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lk(m);
        if (!err)
          err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t)
    pool.emplace_back(work);
  work();
  for (auto& t : pool)
    t.join();
  if (err)
    std::rethrow_exception(err);
}

} // namespace qhm
