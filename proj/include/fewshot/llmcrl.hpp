#pragma once

// Contrastive re-training of the toy encoder: masked-token prediction plus
// a self-supervised contrastive term over shuffled, stopword-free views.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fewshot/corpus.hpp"
#include "fewshot/encoder.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::llmcrl {

struct MaskingPolicy {
  double select_rate = 0.25;
  double mask_frac = 0.8;
  double random_frac = 0.1;
  double keep_frac = 0.1;
  std::uint64_t seed = 0;

  // Throws InvalidArgument unless the fractions sum to 1 and 0 < rate < 1.
  void validate() const;
};

enum class MaskAction { Mask, Random, Keep };

struct MlmBatch {
  std::vector<std::string> corrupted_tokens;
  std::vector<int> target_positions;  // strictly increasing
  std::vector<std::string> target_tokens;
  std::vector<MaskAction> actions;    // parallel to target_positions
};

// Selects exactly max(1, round(select_rate * n_real)) real positions and
// corrupts each one independently. Padding positions are never selected.
// Random replacements are drawn from the non-reserved part of `vocab`.
MlmBatch apply_masking(const PaddedTokens& tokens, const MaskingPolicy& policy, Rng& rng,
                       const Vocabulary& vocab);

// Mean negative log-softmax probability of each target id. Throws
// EmptyTargets on an empty batch.
double mlm_loss(const Matrix& logits, const std::vector<int>& target_ids);

struct SclViews {
  std::vector<std::string> anchor_tokens;
  std::vector<std::string> positive_tokens;
};

// Anchor is the utterance itself; the positive drops stopwords and shuffles
// what remains. Throws AllStopwords when nothing survives.
SclViews make_scl_views(const Utterance& utterance, const std::set<std::string>& stopwords,
                        Rng& rng);

double scl_loss(const Matrix& anchor_vecs, const Matrix& positive_vecs, double tau);

// One token per line; `#` lines are comments.
std::set<std::string> load_stopwords(const std::string& path);

struct LlmcrlLoss {
  double mlm = 0.0;
  double scl = 0.0;
  double total = 0.0;
};

struct RetrainConfig {
  int epochs = 1;
  long max_steps = 0;  // 0 = no cap
  int batch_size = 64;
  double learning_rate = 1e-5;
  double scl_temperature = 0.05;
  std::uint64_t seed = 0;
};

struct LossRecord {
  long step = 0;
  LlmcrlLoss loss;
};

struct RetrainResult {
  ToyEncoder encoder;
  std::vector<LossRecord> history;
};

// Joint optimization of mlm + scl with Adam. Zero epochs or zero steps
// return the encoder unchanged.
RetrainResult retrain(const ToyEncoder& encoder, const Corpus& corpus, const MaskingPolicy& policy,
                      const RetrainConfig& config, const std::set<std::string>& stopwords);

// Loss of one full pass over `corpus` with a fixed masking/view stream and
// no parameter update; used to compare checkpoints.
LlmcrlLoss evaluate_loss(const ToyEncoder& encoder, const Corpus& corpus,
                         const MaskingPolicy& policy, const RetrainConfig& config,
                         const std::set<std::string>& stopwords);

// step,mlm,scl,total
void write_history_csv(const std::vector<LossRecord>& history, const std::string& path);

}  // namespace fewshot::llmcrl
