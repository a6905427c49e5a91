#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "refchain/decoder.hpp"
#include "refchain/kernels.hpp"
#include "refchain/matrix.hpp"
#include "refchain/rng.hpp"
#include "refchain/serialref.hpp"

namespace {

using namespace refchain;
using clock_type = std::chrono::steady_clock;

Matrix random_matrix(RngStream& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.next_in(-1.0, 1.0);
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

// Median-of-reps wall time in milliseconds.
template <typename F>
double time_ms(F&& fn, int reps) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    fn();
    const auto t1 = clock_type::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void print_row(const std::string& name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-28s %10.3f %10.3f %9.2fx %12.3e\n", name.c_str(), serial_ms, parallel_ms,
              serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
  // Production decoder shapes: 52 proposals, chain of 8, d = 768, 16 heads.
  const DecoderConfig cfg;  // defaults are the production sizes
  RngStream rng(7);

  const Matrix f = random_matrix(rng, cfg.proposal_slots, cfg.d);
  const Matrix w = random_matrix(rng, cfg.d, cfg.d);
  const Matrix x = random_matrix(rng, cfg.chain_slots, cfg.d);
  const Matrix big_a = random_matrix(rng, 512, cfg.d);
  const Matrix big_b = random_matrix(rng, cfg.d, 512);
  const DecoderParams params = DecoderParams::init(cfg, 11);

  const int reps = 20;
  std::printf("%-28s %10s %10s %10s %12s\n", "kernel", "serial ms", "openmp ms", "speedup",
              "max |diff|");

  {
    Matrix out;
    const double par = time_ms([&] { kern::matmul_nn(big_a, big_b, out); }, reps);
    Matrix ref;
    const double ser = time_ms([&] { ref = serialref::matmul_nn(big_a, big_b); }, reps);
    print_row("matmul_nn 512x768x512", ser, par, max_abs_diff(out, ref));
  }
  {
    Matrix out;
    const double par = time_ms([&] { kern::matmul_nt(big_a, big_a, out); }, reps);
    Matrix ref;
    const double ser = time_ms([&] { ref = serialref::matmul_nt(big_a, big_a); }, reps);
    print_row("matmul_nt 512x768x512", ser, par, max_abs_diff(out, ref));
  }
  {
    Matrix out;
    const double par = time_ms([&] { kern::matmul_tn(big_a, big_a, out); }, reps);
    Matrix ref;
    const double ser = time_ms([&] { ref = serialref::matmul_tn(big_a, big_a); }, reps);
    print_row("matmul_tn 768x512x768", ser, par, max_abs_diff(out, ref));
  }
  {
    const Matrix scores = random_matrix(rng, 512, 512);
    Matrix out;
    const double par = time_ms(
        [&] {
          out = scores;
          kern::row_softmax(out, MaskMode::Causal);
        },
        reps);
    Matrix ref;
    const double ser = time_ms([&] { ref = serialref::row_softmax(scores, MaskMode::Causal); }, reps);
    print_row("row_softmax 512x512 causal", ser, par, max_abs_diff(out, ref));
  }
  {
    Matrix out;
    const double par =
        time_ms([&] { out = masked_self_attention(x, params, cfg); }, reps);
    Matrix ref;
    const double ser = time_ms(
        [&] {
          ref = serialref::masked_self_attention(x, params.wq, params.wk, params.wv, params.wo,
                                                 cfg.heads, cfg.mask_mode);
        },
        reps);
    print_row("self_attention 8x768 h16", ser, par, max_abs_diff(out, ref));
  }
  {
    CrossOut out;
    const double par = time_ms([&] { out = cross_attention(x, f, cfg); }, reps);
    Matrix ref;
    const double ser = time_ms([&] { ref = serialref::cross_attention_output(x, f); }, reps);
    print_row("cross_attention 8x52x768", ser, par, max_abs_diff(out.output, ref));
  }
  {
    // Full forward at production scale; no serial counterpart, timing only.
    std::vector<std::size_t> classes = {0, 1, 2, 3, 4, 5, 6, 7};
    PathwayOrder order;
    order.ordered_mentions = {7, 6, 5, 4, 3, 2, 1, 0};
    DecoderConfig full = cfg;
    full.num_classes = 16;
    ForwardCache cache;
    const double par =
        time_ms([&] { cache = decode_chain(full, f, classes, order, params); }, reps);
    std::printf("%-28s %10s %10.3f %10s %12s\n", "decode_chain full forward", "-", par, "-", "-");
  }
  return 0;
}
