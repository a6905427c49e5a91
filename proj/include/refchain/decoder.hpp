#pragma once

#include <cstdint>
#include <vector>

#include "refchain/kernels.hpp"
#include "refchain/matrix.hpp"
#include "refchain/pathway.hpp"

namespace refchain {

// Desk-scale decoder configuration. L proposal slots and M chain slots bound
// the feature matrices; the stub classification heads map into num_classes.
struct DecoderConfig {
  std::size_t d = 768;
  std::size_t proposal_slots = 52;  // L
  std::size_t chain_slots = 8;      // M
  std::size_t heads = 16;
  MaskMode mask_mode = MaskMode::Causal;
  double lambda_v = 5.0;
  double lambda_t = 0.5;
  double lambda_ref = 5.0;
  double lambda_dist = 1.0;
  bool anchor_loss_enabled = true;
  std::size_t num_classes = 16;  // C

  // Small instance for gradient checking and the demo subcommand.
  static DecoderConfig toy();

  // Throws std::invalid_argument unless d divides by heads, every lambda is
  // non-negative, and M, L, C are at least 1.
  void validate() const;
};

// Learnable state. Flattening order is fixed (declaration order) so analytic
// and numerical gradients line up index by index.
struct DecoderParams {
  Matrix cls_query;             // C x d  per-class pooling queries
  Matrix w_pool;                // d x d  pooled-feature readout
  std::vector<double> b_pool;   // d
  Matrix wq, wk, wv, wo;        // d x d  self-attention projections
  Matrix w_head;                // d x L  chain logit head
  std::vector<double> b_head;   // L
  Matrix w_cls_v;               // d x C  proposal classification stub
  std::vector<double> b_cls_v;  // C
  Matrix w_cls_t;               // d x C  mention classification stub
  std::vector<double> b_cls_t;  // C
  std::vector<double> w_dist;   // d     distractor head
  double b_dist = 0.0;

  static DecoderParams zeros(const DecoderConfig& cfg);
  static DecoderParams init(const DecoderConfig& cfg, std::uint64_t seed);

  std::size_t flat_size() const;
  std::vector<double> to_flat() const;
  static DecoderParams from_flat(const DecoderConfig& cfg, const std::vector<double>& flat);
};

// Sinusoidal embedding of each mention's logical rank, mention-indexed:
// row m holds the sinusoid of m's position within `order`; rows at and past
// the mention count are zero (padding slots). Throws when |order| exceeds M.
Matrix order_embedding(const PathwayOrder& order, const DecoderConfig& cfg);

// One-shot parallel referring head, mention-indexed. Row m of rf is a linear
// readout of F attention-pooled by the class query of mention m; logits are
// rf * F^T. Rows at and past mention_classes.size() are zero.
struct ParallelOut {
  Matrix rf;      // M x d
  Matrix logits;  // M x L
};
ParallelOut parallel_refer(const Matrix& f, const std::vector<std::size_t>& mention_classes,
                           const DecoderParams& params, const DecoderConfig& cfg);

// Multi-head scaled-dot-product self-attention over the chain, masked per
// cfg.mask_mode. No residual connection, no layer norm.
Matrix masked_self_attention(const Matrix& x, const DecoderParams& params,
                             const DecoderConfig& cfg);

// Parameter-free cross-attention: A = rowsoftmax(Q F^T / sqrt(d)),
// output = A F.
struct CrossOut {
  Matrix attn;    // M x L
  Matrix output;  // M x d
};
CrossOut cross_attention(const Matrix& q, const Matrix& f, const DecoderConfig& cfg);

// Every intermediate of one forward pass, retained for the backward pass and
// for test probes. Chain rows are rank-major: row i belongs to the i-th
// mention of the pathway order; rows at and past n_real are padding.
struct ForwardCache {
  Matrix f;                                 // L x d input features
  std::vector<std::size_t> mention_classes; // per mention
  std::vector<std::size_t> order;           // rank -> mention
  std::size_t n_real = 0;

  // Parallel head, mention-indexed.
  std::vector<std::vector<double>> alpha;  // per mention: L pooling weights
  Matrix pooled;                           // n_mentions x d
  Matrix rf;                               // M x d
  Matrix par_logits;                       // M x L

  // Chain stack, rank-major.
  Matrix x0;                    // M x d  gathered rf + order embedding
  Matrix q, k, v;               // M x d
  std::vector<Matrix> attn;     // per head: M x M
  Matrix concat;                // M x d
  Matrix sa_out;                // M x d
  Matrix cross_attn;            // M x L
  Matrix cross_out;             // M x d
  Matrix cot_logits;            // M x L
};

// Full pipeline: parallel head, order embedding, masked self-attention,
// cross-attention, linear head.
ForwardCache decode_chain(const DecoderConfig& cfg, const Matrix& f,
                          const std::vector<std::size_t>& mention_classes,
                          const PathwayOrder& order, const DecoderParams& params);

// Same pipeline entered after the parallel head: x0 is the rank-major chain
// input (features plus order embedding). Lets tests perturb individual chain
// positions directly.
ForwardCache decode_from_chain_features(const DecoderConfig& cfg, const Matrix& f,
                                        const Matrix& x0, const DecoderParams& params);

struct LossTargets {
  std::vector<std::size_t> gold_chain;           // per real chain position: proposal index
  std::vector<std::size_t> gold_mention_class;   // per real chain position
  std::vector<std::size_t> gold_proposal_class;  // per proposal (L entries)
  std::vector<double> distractor_bits;           // L entries in {0, 1}
  std::size_t target_position = 0;               // chain position of the target
};

struct LossBundle {
  double l_cls_v = 0.0;
  double l_cls_t = 0.0;
  double l_ref_p = 0.0;
  double l_ref_cot = 0.0;
  double l_dist = 0.0;
  double total = 0.0;
  // Raw per-position cross-entropies of the two referring heads, before any
  // weighting or zeroing; n_real entries each.
  std::vector<double> per_position_ce_parallel;
  std::vector<double> per_position_ce_cot;
};

// Eq.-style composite: the referring terms average per-position CE over the
// n_real non-padded positions; with anchor_loss_enabled=false only the
// target position contributes to their numerators (the denominator stays
// n_real, and each position's raw CE term is computed identically either
// way). total is assembled literally as
// lambda_v*l_cls_v + lambda_t*l_cls_t + lambda_ref*(l_ref_p + l_ref_cot)
// + lambda_dist*l_dist.
LossBundle total_loss(const ForwardCache& cache, const LossTargets& targets,
                      const DecoderParams& params, const DecoderConfig& cfg);

// Analytic gradient of LossBundle::total with respect to every parameter.
DecoderParams backward(const ForwardCache& cache, const LossTargets& targets,
                       const DecoderParams& params, const DecoderConfig& cfg);

// A self-contained random instance at the configured sizes.
struct ToyInstance {
  Matrix f;
  std::vector<std::size_t> mention_classes;
  PathwayOrder order;
  LossTargets targets;
  DecoderParams params;
};
ToyInstance make_toy_instance(const DecoderConfig& cfg, std::uint64_t seed);

// Compares backward() against central finite differences (step 1e-5) on a
// seeded toy instance; returns the maximum relative error over all
// parameters.
double grad_check(const DecoderConfig& cfg, std::uint64_t seed);

}  // namespace refchain
