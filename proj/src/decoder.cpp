#include "refchain/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "refchain/rng.hpp"

namespace refchain {

namespace {

// log(sum(exp(z))) of one row, max-shifted.
double row_lse(const double* z, std::size_t n) {
  double m = z[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, z[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(z[i] - m);
  return m + std::log(s);
}

double row_cross_entropy(const double* z, std::size_t n, std::size_t gold) {
  return row_lse(z, n) - z[gold];
}

// Binary cross-entropy with logits, overflow-safe for any z.
double bce_with_logits(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// ds = a (*) (da - sum(a (*) da)): softmax jacobian applied to da. Entries
// with a == 0 (masked) come out exactly 0.
void softmax_backward_row(const double* a, const double* da, double* ds, std::size_t n) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += a[i] * da[i];
  for (std::size_t i = 0; i < n; ++i) ds[i] = a[i] * (da[i] - dot);
}

void sinusoid_row(std::size_t rank, double* out, std::size_t d) {
  const double r = static_cast<double>(rank);
  for (std::size_t j = 0; j < d; ++j) {
    const double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(d);
    const double freq = r / std::pow(10000.0, exponent);
    out[j] = (j % 2 == 0) ? std::sin(freq) : std::cos(freq);
  }
}

void fill_uniform(RngStream& rng, double* out, std::size_t n, double scale) {
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.next_in(-scale, scale);
}

void check_chain_inputs(const DecoderConfig& cfg, const Matrix& f,
                        const std::vector<std::size_t>& mention_classes,
                        const std::vector<std::size_t>& order) {
  if (f.rows() != cfg.proposal_slots || f.cols() != cfg.d)
    throw std::invalid_argument("decoder: feature matrix must be proposal_slots x d");
  if (mention_classes.empty())
    throw std::invalid_argument("decoder: at least one mention required");
  if (mention_classes.size() > cfg.chain_slots)
    throw std::invalid_argument("decoder: mention count exceeds chain slots");
  for (std::size_t c : mention_classes)
    if (c >= cfg.num_classes) throw std::invalid_argument("decoder: mention class id out of range");
  if (order.size() != mention_classes.size())
    throw std::invalid_argument("decoder: order must cover every mention exactly once");
  std::vector<bool> seen(mention_classes.size(), false);
  for (std::size_t m : order) {
    if (m >= mention_classes.size() || seen[m])
      throw std::invalid_argument("decoder: order is not a permutation of the mentions");
    seen[m] = true;
  }
}

void check_targets(const DecoderConfig& cfg, const ForwardCache& cache, const LossTargets& t) {
  if (cache.order.size() != cache.n_real || cache.mention_classes.size() != cache.n_real)
    throw std::invalid_argument("loss: cache must come from decode_chain");
  if (t.gold_chain.size() != cache.n_real || t.gold_mention_class.size() != cache.n_real)
    throw std::invalid_argument("loss: per-position targets must cover the real chain positions");
  if (t.gold_proposal_class.size() != cfg.proposal_slots)
    throw std::invalid_argument("loss: gold_proposal_class must have one entry per proposal slot");
  if (t.distractor_bits.size() != cfg.proposal_slots)
    throw std::invalid_argument("loss: distractor_bits must have one entry per proposal slot");
  if (t.target_position >= cache.n_real)
    throw std::invalid_argument("loss: target_position out of range");
  for (std::size_t g : t.gold_chain)
    if (g >= cfg.proposal_slots) throw std::invalid_argument("loss: gold proposal index out of range");
  for (std::size_t g : t.gold_mention_class)
    if (g >= cfg.num_classes) throw std::invalid_argument("loss: gold mention class out of range");
  for (std::size_t g : t.gold_proposal_class)
    if (g >= cfg.num_classes) throw std::invalid_argument("loss: gold proposal class out of range");
}

// Fills q/k/v/attn/concat/sa_out of the cache from cache.x0.
void sa_forward(const DecoderParams& params, const DecoderConfig& cfg, ForwardCache& cache) {
  const std::size_t m_slots = cfg.chain_slots;
  const std::size_t hd = cfg.d / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  kern::matmul_nn(cache.x0, params.wq, cache.q);
  kern::matmul_nn(cache.x0, params.wk, cache.k);
  kern::matmul_nn(cache.x0, params.wv, cache.v);

  cache.attn.assign(cfg.heads, Matrix(m_slots, m_slots));
  cache.concat = Matrix(m_slots, cfg.d);
  Matrix qh(m_slots, hd), kh(m_slots, hd), vh(m_slots, hd), oh(m_slots, hd);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t c0 = h * hd;
    for (std::size_t i = 0; i < m_slots; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        qh(i, j) = cache.q(i, c0 + j);
        kh(i, j) = cache.k(i, c0 + j);
        vh(i, j) = cache.v(i, c0 + j);
      }
    Matrix& a = cache.attn[h];
    kern::matmul_nt(qh, kh, a);
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] *= scale;
    kern::row_softmax(a, cfg.mask_mode);
    kern::matmul_nn(a, vh, oh);
    for (std::size_t i = 0; i < m_slots; ++i)
      for (std::size_t j = 0; j < hd; ++j) cache.concat(i, c0 + j) = oh(i, j);
  }
  kern::matmul_nn(cache.concat, params.wo, cache.sa_out);
}

// Fills cross_attn/cross_out/cot_logits from cache.sa_out and cache.f.
void tail_forward(const DecoderParams& params, const DecoderConfig& cfg, ForwardCache& cache) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  kern::matmul_nt(cache.sa_out, cache.f, cache.cross_attn);
  for (std::size_t i = 0; i < cache.cross_attn.size(); ++i) cache.cross_attn.data()[i] *= scale;
  kern::row_softmax(cache.cross_attn, MaskMode::None);
  kern::matmul_nn(cache.cross_attn, cache.f, cache.cross_out);

  kern::matmul_nn(cache.cross_out, params.w_head, cache.cot_logits);
  for (std::size_t i = 0; i < cache.cot_logits.rows(); ++i)
    for (std::size_t j = 0; j < cache.cot_logits.cols(); ++j)
      cache.cot_logits(i, j) += params.b_head[j];
}

}  // namespace

DecoderConfig DecoderConfig::toy() {
  DecoderConfig cfg;
  cfg.d = 8;
  cfg.proposal_slots = 8;
  cfg.chain_slots = 3;
  cfg.heads = 2;
  cfg.num_classes = 6;
  return cfg;
}

void DecoderConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0)
    throw std::invalid_argument("config: d must be a positive multiple of heads");
  if (proposal_slots == 0) throw std::invalid_argument("config: proposal_slots must be >= 1");
  if (chain_slots == 0) throw std::invalid_argument("config: chain_slots must be >= 1");
  if (num_classes == 0) throw std::invalid_argument("config: num_classes must be >= 1");
  if (lambda_v < 0.0 || lambda_t < 0.0 || lambda_ref < 0.0 || lambda_dist < 0.0)
    throw std::invalid_argument("config: loss weights must be non-negative");
}

DecoderParams DecoderParams::zeros(const DecoderConfig& cfg) {
  DecoderParams p;
  p.cls_query = Matrix(cfg.num_classes, cfg.d);
  p.w_pool = Matrix(cfg.d, cfg.d);
  p.b_pool.assign(cfg.d, 0.0);
  p.wq = Matrix(cfg.d, cfg.d);
  p.wk = Matrix(cfg.d, cfg.d);
  p.wv = Matrix(cfg.d, cfg.d);
  p.wo = Matrix(cfg.d, cfg.d);
  p.w_head = Matrix(cfg.d, cfg.proposal_slots);
  p.b_head.assign(cfg.proposal_slots, 0.0);
  p.w_cls_v = Matrix(cfg.d, cfg.num_classes);
  p.b_cls_v.assign(cfg.num_classes, 0.0);
  p.w_cls_t = Matrix(cfg.d, cfg.num_classes);
  p.b_cls_t.assign(cfg.num_classes, 0.0);
  p.w_dist.assign(cfg.d, 0.0);
  p.b_dist = 0.0;
  return p;
}

DecoderParams DecoderParams::init(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DecoderParams p = zeros(cfg);
  RngStream rng(seed);
  const double scale = 0.5 / std::sqrt(static_cast<double>(cfg.d));
  fill_uniform(rng, p.cls_query.data(), p.cls_query.size(), 0.5);
  fill_uniform(rng, p.w_pool.data(), p.w_pool.size(), scale);
  fill_uniform(rng, p.b_pool.data(), p.b_pool.size(), scale);
  fill_uniform(rng, p.wq.data(), p.wq.size(), scale);
  fill_uniform(rng, p.wk.data(), p.wk.size(), scale);
  fill_uniform(rng, p.wv.data(), p.wv.size(), scale);
  fill_uniform(rng, p.wo.data(), p.wo.size(), scale);
  fill_uniform(rng, p.w_head.data(), p.w_head.size(), scale);
  fill_uniform(rng, p.b_head.data(), p.b_head.size(), scale);
  fill_uniform(rng, p.w_cls_v.data(), p.w_cls_v.size(), scale);
  fill_uniform(rng, p.b_cls_v.data(), p.b_cls_v.size(), scale);
  fill_uniform(rng, p.w_cls_t.data(), p.w_cls_t.size(), scale);
  fill_uniform(rng, p.b_cls_t.data(), p.b_cls_t.size(), scale);
  fill_uniform(rng, p.w_dist.data(), p.w_dist.size(), scale);
  p.b_dist = rng.next_in(-scale, scale);
  return p;
}

std::size_t DecoderParams::flat_size() const {
  return cls_query.size() + w_pool.size() + b_pool.size() + wq.size() + wk.size() + wv.size() +
         wo.size() + w_head.size() + b_head.size() + w_cls_v.size() + b_cls_v.size() +
         w_cls_t.size() + b_cls_t.size() + w_dist.size() + 1;
}

std::vector<double> DecoderParams::to_flat() const {
  std::vector<double> flat;
  flat.reserve(flat_size());
  auto push_m = [&flat](const Matrix& m) { flat.insert(flat.end(), m.data(), m.data() + m.size()); };
  auto push_v = [&flat](const std::vector<double>& v) { flat.insert(flat.end(), v.begin(), v.end()); };
  push_m(cls_query);
  push_m(w_pool);
  push_v(b_pool);
  push_m(wq);
  push_m(wk);
  push_m(wv);
  push_m(wo);
  push_m(w_head);
  push_v(b_head);
  push_m(w_cls_v);
  push_v(b_cls_v);
  push_m(w_cls_t);
  push_v(b_cls_t);
  push_v(w_dist);
  flat.push_back(b_dist);
  return flat;
}

DecoderParams DecoderParams::from_flat(const DecoderConfig& cfg, const std::vector<double>& flat) {
  DecoderParams p = zeros(cfg);
  if (flat.size() != p.flat_size())
    throw std::invalid_argument("params: flat vector has wrong length");
  std::size_t at = 0;
  auto take_m = [&flat, &at](Matrix& m) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + m.size()), m.data());
    at += m.size();
  };
  auto take_v = [&flat, &at](std::vector<double>& v) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
              flat.begin() + static_cast<std::ptrdiff_t>(at + v.size()), v.begin());
    at += v.size();
  };
  take_m(p.cls_query);
  take_m(p.w_pool);
  take_v(p.b_pool);
  take_m(p.wq);
  take_m(p.wk);
  take_m(p.wv);
  take_m(p.wo);
  take_m(p.w_head);
  take_v(p.b_head);
  take_m(p.w_cls_v);
  take_v(p.b_cls_v);
  take_m(p.w_cls_t);
  take_v(p.b_cls_t);
  take_v(p.w_dist);
  p.b_dist = flat[at];
  return p;
}

Matrix order_embedding(const PathwayOrder& order, const DecoderConfig& cfg) {
  cfg.validate();
  const std::size_t n = order.ordered_mentions.size();
  if (n > cfg.chain_slots)
    throw std::invalid_argument("order_embedding: order exceeds chain slots");
  Matrix out(cfg.chain_slots, cfg.d);
  for (std::size_t rank = 0; rank < n; ++rank) {
    const std::size_t mention = order.ordered_mentions[rank];
    if (mention >= cfg.chain_slots)
      throw std::invalid_argument("order_embedding: mention index exceeds chain slots");
    sinusoid_row(rank, out.row(mention), cfg.d);
  }
  return out;
}

ParallelOut parallel_refer(const Matrix& f, const std::vector<std::size_t>& mention_classes,
                           const DecoderParams& params, const DecoderConfig& cfg) {
  cfg.validate();
  if (f.rows() != cfg.proposal_slots || f.cols() != cfg.d)
    throw std::invalid_argument("parallel_refer: feature matrix must be proposal_slots x d");
  if (mention_classes.size() > cfg.chain_slots)
    throw std::invalid_argument("parallel_refer: mention count exceeds chain slots");
  const std::size_t n = mention_classes.size();
  const std::size_t big_l = cfg.proposal_slots;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));

  ParallelOut out;
  out.rf = Matrix(cfg.chain_slots, cfg.d);
  std::vector<double> scores(big_l), alpha(big_l);
  for (std::size_t m = 0; m < n; ++m) {
    if (mention_classes[m] >= cfg.num_classes)
      throw std::invalid_argument("parallel_refer: mention class id out of range");
    const double* qc = params.cls_query.row(mention_classes[m]);
    for (std::size_t l = 0; l < big_l; ++l) {
      double s = 0.0;
      for (std::size_t j = 0; j < cfg.d; ++j) s += f(l, j) * qc[j];
      scores[l] = s * scale;
    }
    kern::softmax_row(scores.data(), big_l, alpha.data());
    std::vector<double> pooled(cfg.d, 0.0);
    for (std::size_t l = 0; l < big_l; ++l)
      for (std::size_t j = 0; j < cfg.d; ++j) pooled[j] += alpha[l] * f(l, j);
    double* rf_row = out.rf.row(m);
    for (std::size_t j = 0; j < cfg.d; ++j) {
      double s = params.b_pool[j];
      for (std::size_t p = 0; p < cfg.d; ++p) s += pooled[p] * params.w_pool(p, j);
      rf_row[j] = s;
    }
  }
  out.logits = Matrix(cfg.chain_slots, big_l);
  kern::matmul_nt(out.rf, f, out.logits);
  return out;
}

Matrix masked_self_attention(const Matrix& x, const DecoderParams& params,
                             const DecoderConfig& cfg) {
  cfg.validate();
  if (x.rows() != cfg.chain_slots || x.cols() != cfg.d)
    throw std::invalid_argument("masked_self_attention: input must be chain_slots x d");
  ForwardCache cache;
  cache.x0 = x;
  cache.q = Matrix(cfg.chain_slots, cfg.d);
  cache.k = Matrix(cfg.chain_slots, cfg.d);
  cache.v = Matrix(cfg.chain_slots, cfg.d);
  cache.sa_out = Matrix(cfg.chain_slots, cfg.d);
  sa_forward(params, cfg, cache);
  return cache.sa_out;
}

CrossOut cross_attention(const Matrix& q, const Matrix& f, const DecoderConfig& cfg) {
  cfg.validate();
  if (q.cols() != cfg.d || f.cols() != cfg.d)
    throw std::invalid_argument("cross_attention: inputs must have d columns");
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  CrossOut out;
  out.attn = Matrix(q.rows(), f.rows());
  kern::matmul_nt(q, f, out.attn);
  for (std::size_t i = 0; i < out.attn.size(); ++i) out.attn.data()[i] *= scale;
  kern::row_softmax(out.attn, MaskMode::None);
  out.output = Matrix(q.rows(), f.cols());
  kern::matmul_nn(out.attn, f, out.output);
  return out;
}

ForwardCache decode_chain(const DecoderConfig& cfg, const Matrix& f,
                          const std::vector<std::size_t>& mention_classes,
                          const PathwayOrder& order, const DecoderParams& params) {
  cfg.validate();
  check_chain_inputs(cfg, f, mention_classes, order.ordered_mentions);

  ForwardCache cache;
  cache.f = f;
  cache.mention_classes = mention_classes;
  cache.order = order.ordered_mentions;
  cache.n_real = order.ordered_mentions.size();

  const std::size_t n = mention_classes.size();
  const std::size_t big_l = cfg.proposal_slots;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  cache.alpha.assign(n, std::vector<double>(big_l, 0.0));
  cache.pooled = Matrix(n, cfg.d);
  cache.rf = Matrix(cfg.chain_slots, cfg.d);
  std::vector<double> scores(big_l);
  for (std::size_t m = 0; m < n; ++m) {
    const double* qc = params.cls_query.row(mention_classes[m]);
    for (std::size_t l = 0; l < big_l; ++l) {
      double s = 0.0;
      for (std::size_t j = 0; j < cfg.d; ++j) s += f(l, j) * qc[j];
      scores[l] = s * scale;
    }
    kern::softmax_row(scores.data(), big_l, cache.alpha[m].data());
    for (std::size_t l = 0; l < big_l; ++l)
      for (std::size_t j = 0; j < cfg.d; ++j) cache.pooled(m, j) += cache.alpha[m][l] * f(l, j);
    double* rf_row = cache.rf.row(m);
    for (std::size_t j = 0; j < cfg.d; ++j) {
      double s = params.b_pool[j];
      for (std::size_t p = 0; p < cfg.d; ++p) s += cache.pooled(m, p) * params.w_pool(p, j);
      rf_row[j] = s;
    }
  }
  cache.par_logits = Matrix(cfg.chain_slots, big_l);
  kern::matmul_nt(cache.rf, f, cache.par_logits);

  // Gather mention-major rf into rank-major chain slots and add the rank
  // sinusoid; padding slots stay exactly zero.
  cache.x0 = Matrix(cfg.chain_slots, cfg.d);
  std::vector<double> pe(cfg.d);
  for (std::size_t i = 0; i < cache.n_real; ++i) {
    const std::size_t mention = cache.order[i];
    sinusoid_row(i, pe.data(), cfg.d);
    double* dst = cache.x0.row(i);
    const double* src = cache.rf.row(mention);
    for (std::size_t j = 0; j < cfg.d; ++j) dst[j] = src[j] + pe[j];
  }

  cache.q = Matrix(cfg.chain_slots, cfg.d);
  cache.k = Matrix(cfg.chain_slots, cfg.d);
  cache.v = Matrix(cfg.chain_slots, cfg.d);
  cache.sa_out = Matrix(cfg.chain_slots, cfg.d);
  sa_forward(params, cfg, cache);

  cache.cross_attn = Matrix(cfg.chain_slots, big_l);
  cache.cross_out = Matrix(cfg.chain_slots, cfg.d);
  cache.cot_logits = Matrix(cfg.chain_slots, big_l);
  tail_forward(params, cfg, cache);
  return cache;
}

ForwardCache decode_from_chain_features(const DecoderConfig& cfg, const Matrix& f,
                                        const Matrix& x0, const DecoderParams& params) {
  cfg.validate();
  if (f.rows() != cfg.proposal_slots || f.cols() != cfg.d)
    throw std::invalid_argument("decoder: feature matrix must be proposal_slots x d");
  if (x0.rows() != cfg.chain_slots || x0.cols() != cfg.d)
    throw std::invalid_argument("decoder: chain features must be chain_slots x d");
  ForwardCache cache;
  cache.f = f;
  cache.x0 = x0;
  cache.n_real = cfg.chain_slots;
  cache.q = Matrix(cfg.chain_slots, cfg.d);
  cache.k = Matrix(cfg.chain_slots, cfg.d);
  cache.v = Matrix(cfg.chain_slots, cfg.d);
  cache.sa_out = Matrix(cfg.chain_slots, cfg.d);
  sa_forward(params, cfg, cache);
  cache.cross_attn = Matrix(cfg.chain_slots, cfg.proposal_slots);
  cache.cross_out = Matrix(cfg.chain_slots, cfg.d);
  cache.cot_logits = Matrix(cfg.chain_slots, cfg.proposal_slots);
  tail_forward(params, cfg, cache);
  return cache;
}

LossBundle total_loss(const ForwardCache& cache, const LossTargets& targets,
                      const DecoderParams& params, const DecoderConfig& cfg) {
  cfg.validate();
  check_targets(cfg, cache, targets);
  const std::size_t n_real = cache.n_real;
  const std::size_t big_l = cfg.proposal_slots;
  const std::size_t c = cfg.num_classes;

  LossBundle out;

  // Proposal classification stub: mean CE over all L slots.
  std::vector<double> logits(std::max(big_l, c));
  for (std::size_t l = 0; l < big_l; ++l) {
    for (std::size_t j = 0; j < c; ++j) {
      double s = params.b_cls_v[j];
      for (std::size_t p = 0; p < cfg.d; ++p) s += cache.f(l, p) * params.w_cls_v(p, j);
      logits[j] = s;
    }
    out.l_cls_v += row_cross_entropy(logits.data(), c, targets.gold_proposal_class[l]);
  }
  out.l_cls_v /= static_cast<double>(big_l);

  // Mention classification stub: mean CE over real chain positions.
  for (std::size_t i = 0; i < n_real; ++i) {
    const std::size_t mention = cache.order[i];
    for (std::size_t j = 0; j < c; ++j) {
      double s = params.b_cls_t[j];
      for (std::size_t p = 0; p < cfg.d; ++p) s += cache.rf(mention, p) * params.w_cls_t(p, j);
      logits[j] = s;
    }
    out.l_cls_t += row_cross_entropy(logits.data(), c, targets.gold_mention_class[i]);
  }
  out.l_cls_t /= static_cast<double>(n_real);

  // Referring heads: raw per-position CE is always computed; the anchor flag
  // only controls which terms enter the numerator sums.
  out.per_position_ce_parallel.resize(n_real);
  out.per_position_ce_cot.resize(n_real);
  for (std::size_t i = 0; i < n_real; ++i) {
    const std::size_t mention = cache.order[i];
    out.per_position_ce_parallel[i] =
        row_cross_entropy(cache.par_logits.row(mention), big_l, targets.gold_chain[i]);
    out.per_position_ce_cot[i] =
        row_cross_entropy(cache.cot_logits.row(i), big_l, targets.gold_chain[i]);
  }
  for (std::size_t i = 0; i < n_real; ++i) {
    const bool include = cfg.anchor_loss_enabled || i == targets.target_position;
    if (!include) continue;
    out.l_ref_p += out.per_position_ce_parallel[i];
    out.l_ref_cot += out.per_position_ce_cot[i];
  }
  out.l_ref_p /= static_cast<double>(n_real);
  out.l_ref_cot /= static_cast<double>(n_real);

  // Distractor head: mean BCE over all L slots.
  for (std::size_t l = 0; l < big_l; ++l) {
    double z = params.b_dist;
    for (std::size_t p = 0; p < cfg.d; ++p) z += cache.f(l, p) * params.w_dist[p];
    out.l_dist += bce_with_logits(z, targets.distractor_bits[l]);
  }
  out.l_dist /= static_cast<double>(big_l);

  out.total = cfg.lambda_v * out.l_cls_v + cfg.lambda_t * out.l_cls_t +
              cfg.lambda_ref * (out.l_ref_p + out.l_ref_cot) + cfg.lambda_dist * out.l_dist;
  return out;
}

DecoderParams backward(const ForwardCache& cache, const LossTargets& targets,
                       const DecoderParams& params, const DecoderConfig& cfg) {
  cfg.validate();
  check_targets(cfg, cache, targets);
  const std::size_t n_real = cache.n_real;
  const std::size_t m_slots = cfg.chain_slots;
  const std::size_t big_l = cfg.proposal_slots;
  const std::size_t c = cfg.num_classes;
  const std::size_t d = cfg.d;
  const std::size_t hd = d / cfg.heads;

  DecoderParams g = DecoderParams::zeros(cfg);

  // --- Stub heads on F (no flow back into the chain). ---
  std::vector<double> logits(std::max(big_l, c)), probs(std::max(big_l, c));
  const double wv_scale = cfg.lambda_v / static_cast<double>(big_l);
  for (std::size_t l = 0; l < big_l; ++l) {
    for (std::size_t j = 0; j < c; ++j) {
      double s = params.b_cls_v[j];
      for (std::size_t p = 0; p < d; ++p) s += cache.f(l, p) * params.w_cls_v(p, j);
      logits[j] = s;
    }
    kern::softmax_row(logits.data(), c, probs.data());
    probs[targets.gold_proposal_class[l]] -= 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dz = probs[j] * wv_scale;
      g.b_cls_v[j] += dz;
      for (std::size_t p = 0; p < d; ++p) g.w_cls_v(p, j) += cache.f(l, p) * dz;
    }
  }
  const double dist_scale = cfg.lambda_dist / static_cast<double>(big_l);
  for (std::size_t l = 0; l < big_l; ++l) {
    double z = params.b_dist;
    for (std::size_t p = 0; p < d; ++p) z += cache.f(l, p) * params.w_dist[p];
    const double dz = (sigmoid(z) - targets.distractor_bits[l]) * dist_scale;
    g.b_dist += dz;
    for (std::size_t p = 0; p < d; ++p) g.w_dist[p] += cache.f(l, p) * dz;
  }

  // --- Gradient flowing into rf (mention-major) and the chain stack. ---
  Matrix d_rf(m_slots, d);

  // Mention classification stub.
  const double wt_scale = cfg.lambda_t / static_cast<double>(n_real);
  for (std::size_t i = 0; i < n_real; ++i) {
    const std::size_t mention = cache.order[i];
    for (std::size_t j = 0; j < c; ++j) {
      double s = params.b_cls_t[j];
      for (std::size_t p = 0; p < d; ++p) s += cache.rf(mention, p) * params.w_cls_t(p, j);
      logits[j] = s;
    }
    kern::softmax_row(logits.data(), c, probs.data());
    probs[targets.gold_mention_class[i]] -= 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dz = probs[j] * wt_scale;
      g.b_cls_t[j] += dz;
      for (std::size_t p = 0; p < d; ++p) {
        g.w_cls_t(p, j) += cache.rf(mention, p) * dz;
        d_rf(mention, p) += params.w_cls_t(p, j) * dz;
      }
    }
  }

  // Parallel referring CE: par_logits row = rf[mention] . F^T.
  const double ref_scale = cfg.lambda_ref / static_cast<double>(n_real);
  for (std::size_t i = 0; i < n_real; ++i) {
    if (!(cfg.anchor_loss_enabled || i == targets.target_position)) continue;
    const std::size_t mention = cache.order[i];
    kern::softmax_row(cache.par_logits.row(mention), big_l, probs.data());
    probs[targets.gold_chain[i]] -= 1.0;
    for (std::size_t l = 0; l < big_l; ++l) {
      const double dz = probs[l] * ref_scale;
      for (std::size_t p = 0; p < d; ++p) d_rf(mention, p) += cache.f(l, p) * dz;
    }
  }

  // Chain referring CE through the linear head.
  Matrix d_cot(m_slots, big_l);
  for (std::size_t i = 0; i < n_real; ++i) {
    if (!(cfg.anchor_loss_enabled || i == targets.target_position)) continue;
    kern::softmax_row(cache.cot_logits.row(i), big_l, probs.data());
    probs[targets.gold_chain[i]] -= 1.0;
    for (std::size_t l = 0; l < big_l; ++l) d_cot(i, l) = probs[l] * ref_scale;
  }
  Matrix d_cross_out(m_slots, d);
  kern::matmul_tn(cache.cross_out, d_cot, g.w_head);
  for (std::size_t i = 0; i < m_slots; ++i)
    for (std::size_t l = 0; l < big_l; ++l) g.b_head[l] += d_cot(i, l);
  kern::matmul_nt(d_cot, params.w_head, d_cross_out);

  // Cross-attention (parameter-free): only dQ is needed.
  Matrix d_attn(m_slots, big_l), d_scores(m_slots, big_l);
  kern::matmul_nt(d_cross_out, cache.f, d_attn);
  for (std::size_t i = 0; i < m_slots; ++i)
    softmax_backward_row(cache.cross_attn.row(i), d_attn.row(i), d_scores.row(i), big_l);
  Matrix d_sa(m_slots, d);
  kern::matmul_nn(d_scores, cache.f, d_sa);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < d_sa.size(); ++i) d_sa.data()[i] *= inv_sqrt_d;

  // Self-attention backward.
  kern::matmul_tn(cache.concat, d_sa, g.wo);
  Matrix d_concat(m_slots, d);
  kern::matmul_nt(d_sa, params.wo, d_concat);

  Matrix d_q(m_slots, d), d_k(m_slots, d), d_v(m_slots, d);
  const double head_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix qh(m_slots, hd), kh(m_slots, hd), vh(m_slots, hd), doh(m_slots, hd);
  Matrix da_h(m_slots, m_slots), ds_h(m_slots, m_slots);
  Matrix dqh(m_slots, hd), dkh(m_slots, hd), dvh(m_slots, hd);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::size_t c0 = h * hd;
    for (std::size_t i = 0; i < m_slots; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        qh(i, j) = cache.q(i, c0 + j);
        kh(i, j) = cache.k(i, c0 + j);
        vh(i, j) = cache.v(i, c0 + j);
        doh(i, j) = d_concat(i, c0 + j);
      }
    const Matrix& a = cache.attn[h];
    kern::matmul_tn(a, doh, dvh);
    kern::matmul_nt(doh, vh, da_h);
    for (std::size_t i = 0; i < m_slots; ++i)
      softmax_backward_row(a.row(i), da_h.row(i), ds_h.row(i), m_slots);
    kern::matmul_nn(ds_h, kh, dqh);
    kern::matmul_tn(ds_h, qh, dkh);
    for (std::size_t i = 0; i < m_slots; ++i)
      for (std::size_t j = 0; j < hd; ++j) {
        d_q(i, c0 + j) = dqh(i, j) * head_scale;
        d_k(i, c0 + j) = dkh(i, j) * head_scale;
        d_v(i, c0 + j) = dvh(i, j);
      }
  }
  kern::matmul_tn(cache.x0, d_q, g.wq);
  kern::matmul_tn(cache.x0, d_k, g.wk);
  kern::matmul_tn(cache.x0, d_v, g.wv);
  Matrix d_x0(m_slots, d), tmp(m_slots, d);
  kern::matmul_nt(d_q, params.wq, d_x0);
  kern::matmul_nt(d_k, params.wk, tmp);
  for (std::size_t i = 0; i < d_x0.size(); ++i) d_x0.data()[i] += tmp.data()[i];
  kern::matmul_nt(d_v, params.wv, tmp);
  for (std::size_t i = 0; i < d_x0.size(); ++i) d_x0.data()[i] += tmp.data()[i];

  // x0 gather: row i came from rf[order[i]] (order embedding is constant).
  for (std::size_t i = 0; i < n_real; ++i) {
    const std::size_t mention = cache.order[i];
    for (std::size_t p = 0; p < d; ++p) d_rf(mention, p) += d_x0(i, p);
  }

  // Pooling readout and class queries, per real mention.
  std::vector<double> d_pooled(d), d_alpha(big_l), d_s(big_l);
  for (std::size_t m = 0; m < cache.mention_classes.size(); ++m) {
    const double* rf_grad = d_rf.row(m);
    for (std::size_t jj = 0; jj < d; ++jj) g.b_pool[jj] += rf_grad[jj];
    for (std::size_t p = 0; p < d; ++p) {
      double acc = 0.0;
      for (std::size_t jj = 0; jj < d; ++jj) {
        g.w_pool(p, jj) += cache.pooled(m, p) * rf_grad[jj];
        acc += params.w_pool(p, jj) * rf_grad[jj];
      }
      d_pooled[p] = acc;
    }
    for (std::size_t l = 0; l < big_l; ++l) {
      double acc = 0.0;
      for (std::size_t p = 0; p < d; ++p) acc += cache.f(l, p) * d_pooled[p];
      d_alpha[l] = acc;
    }
    softmax_backward_row(cache.alpha[m].data(), d_alpha.data(), d_s.data(), big_l);
    double* qc_grad = g.cls_query.row(cache.mention_classes[m]);
    for (std::size_t l = 0; l < big_l; ++l) {
      const double dz = d_s[l] * inv_sqrt_d;
      for (std::size_t p = 0; p < d; ++p) qc_grad[p] += cache.f(l, p) * dz;
    }
  }

  return g;
}

ToyInstance make_toy_instance(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RngStream rng(seed);
  ToyInstance inst;
  inst.f = Matrix(cfg.proposal_slots, cfg.d);
  for (std::size_t i = 0; i < inst.f.size(); ++i) inst.f.data()[i] = rng.next_in(-1.0, 1.0);

  // Leave one chain slot padded whenever M allows, so padding paths are
  // always exercised.
  const std::size_t n_real = cfg.chain_slots > 1 ? cfg.chain_slots - 1 : 1;
  inst.mention_classes.resize(n_real);
  for (auto& mc : inst.mention_classes) mc = rng.next_index(cfg.num_classes);

  inst.order.ordered_mentions.resize(n_real);
  for (std::size_t i = 0; i < n_real; ++i) inst.order.ordered_mentions[i] = i;
  for (std::size_t i = n_real; i > 1; --i)
    std::swap(inst.order.ordered_mentions[i - 1], inst.order.ordered_mentions[rng.next_index(i)]);

  inst.targets.gold_chain.resize(n_real);
  for (auto& gc : inst.targets.gold_chain) gc = rng.next_index(cfg.proposal_slots);
  inst.targets.gold_mention_class.resize(n_real);
  for (auto& gm : inst.targets.gold_mention_class) gm = rng.next_index(cfg.num_classes);
  inst.targets.gold_proposal_class.resize(cfg.proposal_slots);
  for (auto& gp : inst.targets.gold_proposal_class) gp = rng.next_index(cfg.num_classes);
  inst.targets.distractor_bits.resize(cfg.proposal_slots);
  for (auto& b : inst.targets.distractor_bits) b = static_cast<double>(rng.next_index(2));
  inst.targets.target_position = n_real - 1;

  inst.params = DecoderParams::init(cfg, rng.next_u64());
  return inst;
}

double grad_check(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ToyInstance inst = make_toy_instance(cfg, seed);
  const ForwardCache cache =
      decode_chain(cfg, inst.f, inst.mention_classes, inst.order, inst.params);
  const DecoderParams analytic = backward(cache, inst.targets, inst.params, cfg);
  const std::vector<double> ga = analytic.to_flat();
  std::vector<double> flat = inst.params.to_flat();

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + h;
    DecoderParams plus = DecoderParams::from_flat(cfg, flat);
    const double lp =
        total_loss(decode_chain(cfg, inst.f, inst.mention_classes, inst.order, plus), inst.targets,
                   plus, cfg)
            .total;
    flat[i] = saved - h;
    DecoderParams minus = DecoderParams::from_flat(cfg, flat);
    const double lm =
        total_loss(decode_chain(cfg, inst.f, inst.mention_classes, inst.order, minus), inst.targets,
                   minus, cfg)
            .total;
    flat[i] = saved;
    const double gn = (lp - lm) / (2.0 * h);
    // The difference quotient carries ~1e-9 of cancellation noise (loss is
    // O(10), divided by 2h). The floor keeps near-zero gradients from being
    // judged against a denominator smaller than that noise.
    const double rel = std::abs(ga[i] - gn) / std::max({std::abs(ga[i]), std::abs(gn), 1e-4});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace refchain
