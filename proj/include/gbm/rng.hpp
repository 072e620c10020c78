#pragma once

// Counter-based random numbers (Philox-4x32-10) and a deterministic chunked
// Monte Carlo driver.
//
// Every random quantity is a pure function of (seed, sample index, block), so
// a sampling run is reproducible bit-for-bit no matter how the samples are
// split across workers.  Accumulation happens in fixed chunks of 16384
// samples; workers grab whole chunks and the final reduction walks chunks in
// index order, which pins the floating-point summation order.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <thread>
#include <vector>

#include "gbm/math.hpp"

namespace gbm {

inline constexpr int64_t kMcChunk = 16384;

struct SamplingBudget {
  int64_t samples = 0;
  uint64_t seed = 0;
};

namespace philox {

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
  uint64_t p = uint64_t(a) * uint64_t(b);
  hi = uint32_t(p >> 32);
  lo = uint32_t(p);
}

// One 10-round Philox-4x32 block.
inline void block(uint64_t seed, uint64_t ctr_lo, uint64_t ctr_hi,
                  uint32_t out[4]) {
  uint32_t c0 = uint32_t(ctr_lo), c1 = uint32_t(ctr_lo >> 32);
  uint32_t c2 = uint32_t(ctr_hi), c3 = uint32_t(ctr_hi >> 32);
  uint32_t k0 = uint32_t(seed), k1 = uint32_t(seed >> 32);
  for (int round = 0; round < 10; ++round) {
    uint32_t hi0, lo0, hi1, lo1;
    mulhilo(0xD2511F53u, c0, hi0, lo0);
    mulhilo(0xCD9E8D57u, c2, hi1, lo1);
    uint32_t n0 = hi1 ^ c1 ^ k0;
    uint32_t n1 = lo1;
    uint32_t n2 = hi0 ^ c3 ^ k1;
    uint32_t n3 = lo0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  out[0] = c0;
  out[1] = c1;
  out[2] = c2;
  out[3] = c3;
}

}  // namespace philox

// Uniform in (0, 1]: 53 bits from two 32-bit words, never exactly zero.
inline double u01_open(uint32_t a, uint32_t b) {
  uint64_t v = (uint64_t(a >> 6) << 27) | uint64_t(b >> 5);  // 53 bits
  return double(v + 1) * 0x1.0p-53;
}

// Standard normal pair number `pair_index` of sample `sample_index`.
inline void normal_pair(uint64_t seed, int64_t sample_index,
                        uint32_t pair_index, double& z0, double& z1) {
  uint32_t r[4];
  philox::block(seed, uint64_t(sample_index),
                (uint64_t(pair_index) << 32) | 0x67626d31u, r);
  double u1 = u01_open(r[0], r[1]);
  double u2 = u01_open(r[2], r[3]);
  double rad = std::sqrt(-2.0 * std::log(u1));
  z0 = rad * std::cos(2.0 * kPi * u2);
  z1 = rad * std::sin(2.0 * kPi * u2);
}

// Fills z[0..dim) with the standard normal coordinates of one sample point.
inline void gaussian_point(uint64_t seed, int64_t sample_index, int dim,
                           double* z) {
  for (int b = 0; 2 * b < dim; ++b) {
    double z0, z1;
    normal_pair(seed, sample_index, uint32_t(b), z0, z1);
    z[2 * b] = z0;
    if (2 * b + 1 < dim) z[2 * b + 1] = z1;
  }
}

// A generic uniform double derived from (seed, a, b); used by corpus
// generation and tie-breaking, never in measure estimates.
inline double hash_u01(uint64_t seed, uint64_t a, uint64_t b = 0) {
  uint32_t r[4];
  philox::block(seed, a, b ^ 0x9E3779B97F4A7C15ull, r);
  return u01_open(r[0], r[1]);
}

inline int worker_count_from_env() {
  const char* s = std::getenv("GBM_WORKERS");
  if (s != nullptr) {
    int v = std::atoi(s);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

// Runs `fn(x, acc)` over `samples` Gaussian points in dimension `dim`,
// accumulating `n_acc` doubles per chunk.  Returns the per-chunk partial sums
// (chunk-major).  The result is a pure function of (seed, samples, dim, fn):
// worker count only affects wall time.
template <class F>
std::vector<std::vector<double>> mc_chunk_sums(uint64_t seed, int64_t samples,
                                               int dim, int n_acc, F&& fn,
                                               int workers = 0) {
  if (samples <= 0) throw std::invalid_argument("mc_chunk_sums: samples <= 0");
  if (dim < 1 || dim > 64) throw std::invalid_argument("mc_chunk_sums: dim");
  int64_t n_chunks = (samples + kMcChunk - 1) / kMcChunk;
  std::vector<std::vector<double>> out(static_cast<size_t>(n_chunks));
  if (workers <= 0) workers = worker_count_from_env();
  workers = int(std::min<int64_t>(workers, n_chunks));

  std::atomic<int64_t> next{0};
  auto run = [&]() {
    std::vector<double> x(dim);
    for (;;) {
      int64_t c = next.fetch_add(1);
      if (c >= n_chunks) break;
      std::vector<double> acc(n_acc, 0.0);
      int64_t lo = c * kMcChunk, hi = std::min(samples, lo + kMcChunk);
      for (int64_t i = lo; i < hi; ++i) {
        gaussian_point(seed, i, dim, x.data());
        fn(x.data(), acc.data());
      }
      out[size_t(c)] = std::move(acc);
    }
  };
  if (workers <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }
  return out;
}

// Chunk-ordered reduction of mc_chunk_sums output.
inline std::vector<double> reduce_chunks(
    const std::vector<std::vector<double>>& chunks) {
  if (chunks.empty()) return {};
  std::vector<double> total(chunks.front().size(), 0.0);
  for (const auto& c : chunks)
    for (size_t j = 0; j < total.size(); ++j) total[j] += c[j];
  return total;
}

template <class F>
std::vector<double> mc_accumulate(uint64_t seed, int64_t samples, int dim,
                                  int n_acc, F&& fn, int workers = 0) {
  return reduce_chunks(
      mc_chunk_sums(seed, samples, dim, n_acc, std::forward<F>(fn), workers));
}

}  // namespace gbm
