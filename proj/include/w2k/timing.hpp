#ifndef W2K_TIMING_HPP_
#define W2K_TIMING_HPP_

#include <chrono>
#include <ctime>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

namespace w2k {

struct StageTiming {
  double cpu_seconds = 0.0;
  double wall_seconds = 0.0;

  StageTiming& operator+=(const StageTiming& o) {
    cpu_seconds += o.cpu_seconds;
    wall_seconds += o.wall_seconds;
    return *this;
  }
};

// Process CPU time (all threads) in seconds.
inline double process_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

// CPU time of the calling thread in seconds.
inline double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

// Accumulated timings by stage label.
using TimingLog = std::map<std::string, StageTiming, std::less<>>;

template <typename R>
struct Timed {
  R value;
  StageTiming timing;
};

template <>
struct Timed<void> {
  StageTiming timing;
};

// Runs `fn` and measures it. When `log` is given the timing is added under
// `label`. Stages must not run concurrently with each other for the CPU
// figure to be attributable.
template <typename F>
auto time_stage(std::string_view label, F&& fn, TimingLog* log = nullptr) {
  using R = std::invoke_result_t<F>;
  const auto wall0 = std::chrono::steady_clock::now();
  const double cpu0 = process_cpu_seconds();
  auto finish = [&] {
    StageTiming t;
    t.cpu_seconds = process_cpu_seconds() - cpu0;
    t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    if (log != nullptr) {
      auto it = log->find(label);
      if (it == log->end()) it = log->emplace(std::string(label), StageTiming{}).first;
      it->second += t;
    }
    return t;
  };
  if constexpr (std::is_void_v<R>) {
    std::forward<F>(fn)();
    return Timed<void>{finish()};
  } else {
    R value = std::forward<F>(fn)();
    const StageTiming t = finish();
    return Timed<R>{std::move(value), t};
  }
}

}  // namespace w2k

#endif  // W2K_TIMING_HPP_
