#pragma once

// Prototype-informed attention head.
//
// Support path:  XS -> shared Q/K/V -> {sentence attention, class attention}
//                -> max over positions -> layer norm -> harmonic fusion
//                -> PI weighting over the K shots -> AD feed-forward.
// Query path:    XQ -> shared Q/K/V -> sentence attention -> layer norm
//                -> max over positions -> the same AD feed-forward.
// Scoring:       cosine(query, prototype) / t, cross-entropy, plus two
//                InfoNCE regularizers against a dropout-perturbed pass.
//
// Per-sentence tensors (N x K x d_h) are stored flattened as (N*K) x d_h,
// class-major.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fewshot/autodiff.hpp"
#include "fewshot/encoder.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::pia {

struct PiaConfig {
  int d_h = 64;
  int heads = 4;
  double dropout_rate = 0.1;
  double metric_temperature = 0.1;  // t
  double ucl_temperature = 0.05;    // tau
  int hidden_size = 300;

  int d_head() const { return d_h / heads; }
  void validate() const;
};

inline constexpr double kLayerNormBiasInit = 3.0;

struct FiatParams {
  Matrix w_q, w_k, w_v;  // d_h x d_h
  Matrix b_q, b_k, b_v;  // 1 x d_h
  // One layer norm per attention site.
  Matrix ln_sent_gain, ln_sent_bias;
  Matrix ln_class_gain, ln_class_bias;
  Matrix ln_query_gain, ln_query_bias;
};

struct PiLayerParams {
  Matrix w_pi;  // d_h x d_h
  Matrix b_pi;  // 1 x d_h
};

struct AdLayerParams {
  Matrix w1;  // hidden x d_h
  Matrix b1;  // 1 x hidden
  Matrix w2;  // d_h x hidden
  Matrix b2;  // 1 x d_h
};

struct PiaParams {
  FiatParams fiat;
  PiLayerParams pi;
  AdLayerParams ad;

  // Q/K/V and AD weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero;
  // layer norms gain 1, bias kLayerNormBiasInit; PI layer zero (uniform
  // shot weighting).
  static PiaParams initialize(const PiaConfig& config, std::uint64_t seed);

  int d_h() const { return static_cast<int>(fiat.w_q.rows()); }
  int hidden_size() const { return static_cast<int>(ad.w1.rows()); }

  // Visits every trainable tensor as (name, matrix) in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    f("fiat.w_q", fiat.w_q);
    f("fiat.w_k", fiat.w_k);
    f("fiat.w_v", fiat.w_v);
    f("fiat.b_q", fiat.b_q);
    f("fiat.b_k", fiat.b_k);
    f("fiat.b_v", fiat.b_v);
    f("fiat.ln_sent_gain", fiat.ln_sent_gain);
    f("fiat.ln_sent_bias", fiat.ln_sent_bias);
    f("fiat.ln_class_gain", fiat.ln_class_gain);
    f("fiat.ln_class_bias", fiat.ln_class_bias);
    f("fiat.ln_query_gain", fiat.ln_query_gain);
    f("fiat.ln_query_bias", fiat.ln_query_bias);
    f("pi.w_pi", pi.w_pi);
    f("pi.b_pi", pi.b_pi);
    f("ad.w1", ad.w1);
    f("ad.b1", ad.b1);
    f("ad.w2", ad.w2);
    f("ad.b2", ad.b2);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<PiaParams*>(this)->for_each(
        [&f](const char* name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }

  std::vector<Matrix*> tensors();
};

// Checkpoint: "FSPIACK1", u32 version, d_h, heads, hidden_size, tensor count,
// then named float64 row-major blocks.
void save_checkpoint(const PiaParams& params, const PiaConfig& config, const std::string& path);
PiaParams load_checkpoint(const std::string& path, PiaConfig& config);

struct LossBreakdown {
  double ce = 0.0;
  double ucl1 = 0.0;
  double ucl2 = 0.0;
  double total = 0.0;
};

// ---------------------------------------------------------------------------
// Stand-alone building blocks on plain matrices.

struct Projections {
  std::vector<Matrix> q, k, v;  // one rows x d_head slice per head
};

Projections qkv_transform(const Matrix& x, const FiatParams& fiat, int heads);

// softmax(Q K^T / sqrt(d_head)) V with invalid keys excluded.
Matrix scaled_attention(const Matrix& q, const Matrix& k, const Matrix& v, const RowMask& key_mask);

Matrix fiat_sentence_attention(std::span<const SequenceEmbedding> support, int n_way,
                               const PiaParams& params, const PiaConfig& config);
Matrix fiat_class_attention(std::span<const SequenceEmbedding> support, int n_way,
                            const PiaParams& params, const PiaConfig& config);
Matrix fuse_proto1(const Matrix& i_sent, const Matrix& i_cla);
Matrix query_attention(std::span<const SequenceEmbedding> queries, const PiaParams& params,
                       const PiaConfig& config);
Matrix pi_layer(const Matrix& proto1, int n_way, const PiLayerParams& pi);
std::pair<Matrix, Matrix> ad_layer(const Matrix& proto2, const Matrix& xq_sent,
                                   const AdLayerParams& ad);
double ucl_loss(const Matrix& reps, const Matrix& reps_prime, double tau);
Matrix metric_scores(const Matrix& xq_p, const Matrix& proto, double t);
double ce_loss(const Matrix& simcos, const std::vector<int>& true_class);

// ---------------------------------------------------------------------------
// Differentiable pipeline.

struct BoundParams {
  ad::Var w_q, w_k, w_v, b_q, b_k, b_v;
  ad::Var ln_sent_gain, ln_sent_bias, ln_class_gain, ln_class_bias, ln_query_gain, ln_query_bias;
  ad::Var w_pi, b_pi;
  ad::Var w1, b1, w2, b2;

  // Same order as PiaParams::for_each.
  std::vector<ad::Var> list() const;
};

// Places every tensor on `tape` once; both paths reuse these nodes.
BoundParams bind(ad::Tape& tape, const PiaParams& params, bool trainable);

// Support embeddings (class-major, N*K) -> final prototypes (N x d_h).
ad::Var support_prototypes(const BoundParams& p, std::span<const SequenceEmbedding> support,
                           int n_way, const PiaConfig& config);
// Query embeddings -> query representations (NQ x d_h).
ad::Var query_representations(const BoundParams& p, std::span<const SequenceEmbedding> queries,
                              const PiaConfig& config);

struct EpisodeBatch {
  std::vector<SequenceEmbedding> support;  // class-major, N*K
  std::vector<SequenceEmbedding> query;
  std::vector<int> query_labels;           // episode-local class index
  int n_way = 0;
};

struct EpisodeGraph {
  ad::Var simcos, ce, ucl1, ucl2, total;
  ad::Var proto, xq_p;
};

// Main pass plus a dropout pass on the inputs for the two UCL terms.
EpisodeGraph forward_graph(const BoundParams& p, const EpisodeBatch& batch,
                           const PiaConfig& config, Rng& rng);

struct EpisodeResult {
  Matrix simcos;
  LossBreakdown loss;
  std::vector<int> predictions;
};

EpisodeResult forward_episode(const EpisodeBatch& batch, const PiaParams& params,
                              const PiaConfig& config, Rng& rng);

// Index of the row maximum; the first maximum wins.
std::vector<int> argmax_rows(const Matrix& scores);

}  // namespace fewshot::pia
