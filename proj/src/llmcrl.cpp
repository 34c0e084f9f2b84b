#include "fewshot/llmcrl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "fewshot/contrastive.hpp"
#include "fewshot/error.hpp"
#include "fewshot/optim.hpp"

namespace fewshot::llmcrl {

void MaskingPolicy::validate() const {
  if (!(select_rate > 0.0 && select_rate < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "select_rate must lie in (0, 1)");
  }
  if (mask_frac < 0 || random_frac < 0 || keep_frac < 0 ||
      std::abs(mask_frac + random_frac + keep_frac - 1.0) > 1e-12) {
    throw Error(ErrorKind::InvalidArgument, "mask/random/keep fractions must sum to 1");
  }
}

MlmBatch apply_masking(const PaddedTokens& tokens, const MaskingPolicy& policy, Rng& rng,
                       const Vocabulary& vocab) {
  policy.validate();
  std::vector<int> real;
  for (Eigen::Index i = 0; i < tokens.mask.size(); ++i) {
    if (tokens.mask(i)) real.push_back(static_cast<int>(i));
  }
  if (real.empty()) throw Error(ErrorKind::EmptyTargets, "no real tokens to mask");
  if (vocab.size() <= Vocabulary::kUnk + 1) {
    throw Error(ErrorKind::InvalidArgument, "vocabulary has no regular tokens");
  }
  const auto n_select = static_cast<std::size_t>(
      std::max(1L, std::lround(policy.select_rate * static_cast<double>(real.size()))));

  // Partial Fisher-Yates: the first n_select entries become a uniform sample.
  for (std::size_t i = 0; i < n_select; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, real.size() - 1);
    std::swap(real[i], real[pick(rng)]);
  }
  std::vector<int> chosen(real.begin(), real.begin() + static_cast<long>(n_select));
  std::sort(chosen.begin(), chosen.end());

  MlmBatch batch;
  batch.corrupted_tokens = tokens.tokens;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> random_token(Vocabulary::kUnk + 1, vocab.size() - 1);
  for (int pos : chosen) {
    const auto p = static_cast<std::size_t>(pos);
    batch.target_positions.push_back(pos);
    batch.target_tokens.push_back(tokens.tokens[p]);
    const double u = coin(rng);
    if (u < policy.mask_frac) {
      batch.corrupted_tokens[p] = kMaskToken;
      batch.actions.push_back(MaskAction::Mask);
    } else if (u < policy.mask_frac + policy.random_frac) {
      batch.corrupted_tokens[p] = vocab.token(random_token(rng));
      batch.actions.push_back(MaskAction::Random);
    } else {
      batch.actions.push_back(MaskAction::Keep);
    }
  }
  return batch;
}

double mlm_loss(const Matrix& logits, const std::vector<int>& target_ids) {
  if (target_ids.empty()) throw Error(ErrorKind::EmptyTargets, "mlm_loss");
  if (logits.rows() != static_cast<Eigen::Index>(target_ids.size())) {
    throw Error(ErrorKind::DimensionMismatch, "one logit row per target");
  }
  ad::Tape tape;
  return ad::cross_entropy_rows(tape.constant(logits), target_ids).scalar();
}

SclViews make_scl_views(const Utterance& utterance, const std::set<std::string>& stopwords,
                        Rng& rng) {
  SclViews views;
  views.anchor_tokens = utterance.tokens;
  for (const auto& t : utterance.tokens) {
    if (!stopwords.count(t)) views.positive_tokens.push_back(t);
  }
  if (views.positive_tokens.empty()) throw Error(ErrorKind::AllStopwords, utterance.id);
  std::shuffle(views.positive_tokens.begin(), views.positive_tokens.end(), rng);
  return views;
}

double scl_loss(const Matrix& anchor_vecs, const Matrix& positive_vecs, double tau) {
  return info_nce(anchor_vecs, positive_vecs, tau);
}

std::set<std::string> load_stopwords(const std::string& path) {
  std::set<std::string> words;
  for (const auto& line : read_lines(path)) {
    if (!line.empty() && line[0] == '#') continue;
    for (auto& tok : tokenize(line)) words.insert(std::move(tok));
  }
  return words;
}

namespace {

struct BatchLoss {
  ad::Var mlm;
  ad::Var scl;
};

ad::Var pooled(const ToyEncoder& enc, const ToyEncoder::Bound& bound, const PaddedTokens& padded) {
  ad::Var h = enc.forward(bound, enc.ids(padded.tokens), padded.mask);
  Matrix weights = padded.mask.cast<double>().transpose().matrix();
  weights /= weights.sum();
  return ad::matmul(h.tape->constant(std::move(weights)), h);
}

BatchLoss batch_loss(ad::Tape& tape, const ToyEncoder& enc, const ToyEncoder::Bound& bound,
                     const std::vector<const Utterance*>& batch, const MaskingPolicy& policy,
                     Rng& rng, const std::set<std::string>& stopwords, double tau) {
  std::vector<ad::Var> logits, anchors, positives;
  std::vector<int> targets;
  for (const Utterance* u : batch) {
    PaddedTokens padded = pad_or_truncate(u->tokens, enc.max_len());
    MlmBatch masked = apply_masking(padded, policy, rng, enc.vocab());
    ad::Var h = enc.forward(bound, enc.ids(masked.corrupted_tokens), padded.mask);
    std::vector<ad::Var> rows;
    for (std::size_t i = 0; i < masked.target_positions.size(); ++i) {
      rows.push_back(ad::slice_rows(h, masked.target_positions[i], 1));
      targets.push_back(enc.vocab().id(masked.target_tokens[i]));
    }
    logits.push_back(ad::matmul(ad::concat_rows(rows), bound.mlm_head));

    SclViews views;
    try {
      views = make_scl_views(*u, stopwords, rng);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::AllStopwords) throw;
      continue;
    }
    anchors.push_back(pooled(enc, bound, padded));
    positives.push_back(pooled(enc, bound, pad_or_truncate(views.positive_tokens, enc.max_len())));
  }
  BatchLoss out;
  out.mlm = ad::cross_entropy_rows(ad::concat_rows(logits), targets);
  if (anchors.size() >= 2) {
    out.scl = info_nce(ad::concat_rows(anchors), ad::concat_rows(positives), tau);
  } else {
    out.scl = tape.constant(Matrix::Zero(1, 1));
  }
  return out;
}

std::vector<Matrix*> param_list(ToyEncoderParams& p) {
  std::vector<Matrix*> out;
  p.for_each([&out](const char*, Matrix& m) { out.push_back(&m); });
  return out;
}

std::vector<ad::Var> bound_list(const ToyEncoder::Bound& b) {
  return {b.token_embedding, b.position_embedding, b.w_q, b.w_k,
          b.w_v, b.w_out, b.b_out, b.mlm_head};
}

}  // namespace

RetrainResult retrain(const ToyEncoder& encoder, const Corpus& corpus, const MaskingPolicy& policy,
                      const RetrainConfig& config, const std::set<std::string>& stopwords) {
  policy.validate();
  if (config.batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  RetrainResult result{encoder, {}};
  Adam adam(AdamConfig{config.learning_rate});
  Rng order_rng = make_rng(config.seed, "retrain-order");
  Rng mask_rng = make_rng(policy.seed ^ config.seed, "retrain-masking");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      if (config.max_steps > 0 && step >= config.max_steps) return result;
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Utterance*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&corpus.utterances()[order[i]]);

      ad::Tape tape;
      auto bound = result.encoder.bind(tape, true);
      BatchLoss loss = batch_loss(tape, result.encoder, bound, batch, policy, mask_rng, stopwords,
                                  config.scl_temperature);
      ad::Var total = ad::add(loss.mlm, loss.scl);
      tape.backward(total);

      std::vector<Matrix> grads;
      for (const ad::Var& v : bound_list(bound)) grads.push_back(tape.grad(v));
      adam.step(param_list(result.encoder.params()), grads);
      result.history.push_back(
          LossRecord{step, LlmcrlLoss{loss.mlm.scalar(), loss.scl.scalar(),
                                      loss.mlm.scalar() + loss.scl.scalar()}});
      ++step;
    }
  }
  return result;
}

LlmcrlLoss evaluate_loss(const ToyEncoder& encoder, const Corpus& corpus,
                         const MaskingPolicy& policy, const RetrainConfig& config,
                         const std::set<std::string>& stopwords) {
  Rng rng = make_rng(config.seed, "llmcrl-eval");
  LlmcrlLoss sum;
  int batches = 0;
  const auto bs = static_cast<std::size_t>(std::max(2, config.batch_size));
  for (std::size_t start = 0; start < corpus.size(); start += bs) {
    const std::size_t end = std::min(corpus.size(), start + bs);
    std::vector<const Utterance*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&corpus.utterances()[i]);
    ad::Tape tape;
    auto bound = encoder.bind(tape, false);
    BatchLoss loss = batch_loss(tape, encoder, bound, batch, policy, rng, stopwords,
                                config.scl_temperature);
    sum.mlm += loss.mlm.scalar();
    sum.scl += loss.scl.scalar();
    ++batches;
  }
  sum.mlm /= batches;
  sum.scl /= batches;
  sum.total = sum.mlm + sum.scl;
  return sum;
}

void write_history_csv(const std::vector<LossRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "step,mlm,scl,total\n" << std::setprecision(10);
  for (const auto& r : history) {
    out << r.step << ',' << r.loss.mlm << ',' << r.loss.scl << ',' << r.loss.total << '\n';
  }
}

}  // namespace fewshot::llmcrl
