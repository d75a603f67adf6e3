#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hoi {

// Raised when a computation produces a non-finite value.  The CLI maps this
// to its own exit code so numeric blow-ups are distinguishable from ordinary
// runtime failures.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

template <typename... Args>
std::string str_cat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

[[noreturn]] inline void fail_numeric(const std::string& msg) {
  throw NumericError(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Thread count: HOI_THREADS overrides, otherwise hardware concurrency.
inline int default_thread_count() {
  if (const char* env = std::getenv("HOI_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Deterministic chunked parallel map: the index partition depends only on n
// and the thread count, and each chunk writes disjoint outputs.  Safe for
// independent per-item work (dataset records, eval scenes, field queries).
inline void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body,
                         int threads = 0) {
  if (threads <= 0) threads = default_thread_count();
  if (threads == 1 || n < 2) {
    body(0, n);
    return;
  }
  int64_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    int64_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic RNG.  Uses mt19937_64 for the raw stream but hand-rolled
// uniform/normal conversions so sequences are identical across platforms and
// standard library versions (std::normal_distribution is not portable).
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int64_t uniform_int(int64_t lo, int64_t hi) {
    if (lo > hi) fail("Rng::uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(gen_() % span);
  }

  // standard normal via Box-Muller (explicit, portable)
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // decorrelated child stream (per record, per batch, ...)
  Rng fork(uint64_t stream) {
    return Rng(splitmix64(gen_() ^ splitmix64(stream * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull)));
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Independent child seed without consuming parent state (pure function of
// seed and stream id; used for per-scene generation so records are
// order-independent).
inline uint64_t substream_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ED2701FBB5E02Dull));
}

}  // namespace hoi
