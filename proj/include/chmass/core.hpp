#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <concepts>
#include <cstdint>
#include <cstdlib>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace chmass {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;

struct domain_error : std::domain_error {
  using std::domain_error::domain_error;
};

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// thread count for batch loops, capped by CHMASS_THREADS when set
inline int thread_cap() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("CHMASS_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(std::min<long>(v, hw));
  }
  return hw;
}

// Each index writes only its own slot, so results do not depend on the
// number of workers.
template <class F>
void parallel_for(std::size_t n, F&& f, int threads = 0) {
  int t = threads > 0 ? threads : thread_cap();
  if (t <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  t = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(t), n));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(t);
  for (int k = 0; k < t; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < n; i += t) f(i);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// Per-sample generators derived from (seed, stream, index) so sampling is
// reproducible regardless of evaluation order.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

inline Vec random_normal(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> nd;
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

// uniform point in the ball of radius rmax (real dimension n)
inline Vec random_ball_point(std::mt19937_64& rng, int n, double rmax) {
  Vec v = random_normal(rng, n);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  double r = rmax * std::pow(ud(rng), 1.0 / n);
  return v.normalized() * r;
}

// Fourth order central difference of f along v. Works for anything with
// vector-space arithmetic (double, Vec, Mat, CVec).
template <class F>
auto fd_dir(F&& f, const Vec& p, const Vec& v, double h) {
  using R = std::decay_t<decltype(f(p))>;
  R fp1 = f(p + h * v);
  R fm1 = f(p - h * v);
  R fp2 = f(p + 2 * h * v);
  R fm2 = f(p - 2 * h * v);
  return R(((fm2 - fp2) + 8.0 * (fp1 - fm1)) / (12.0 * h));
}

// default finite-difference step, shrunk near the unit sphere where the
// model metrics blow up
inline double fd_step(const Vec& p, double base = 1e-4) {
  double r = p.norm();
  return base * std::min(1.0, std::max(1e-3, 2.0 * (1.0 - r)));
}

inline int popcount(unsigned x) { return __builtin_popcount(x); }

inline std::vector<std::vector<int>> combinations(int n, int k) {
  std::vector<std::vector<int>> out;
  if (k < 0 || k > n) return out;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace chmass
