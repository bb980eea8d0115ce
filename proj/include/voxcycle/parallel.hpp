// Copyright 2026 The VoxCycle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace voxcycle {

namespace detail {

inline std::atomic<int>& thread_setting() {
  static std::atomic<int> n{[] {
    if (const char* env = std::getenv("VOXCYCLE_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }()};
  return n;
}

}  // namespace detail

// Worker cap for internal parallel loops. Initialized from VOXCYCLE_THREADS,
// else the hardware concurrency.
inline int num_threads() { return detail::thread_setting().load(); }

inline void set_num_threads(int n) { detail::thread_setting().store(std::max(1, n)); }

// Runs fn(i) for i in [0, count). Work items are claimed dynamically, so fn must
// only write to storage owned by item i; every reduction in the library is
// organized per item and combined in index order afterwards, which keeps results
// independent of the worker count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::min<std::size_t>(num_threads(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace voxcycle
