#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fewshot/corpus.hpp"
#include "fewshot/encoder.hpp"
#include "fewshot/episodes.hpp"
#include "fewshot/optim.hpp"
#include "fewshot/pia.hpp"
#include "fewshot/similarity.hpp"

namespace fewshot::trainkit {

// rows = true class, cols = predicted class
struct ConfusionMatrix {
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> counts;
  std::vector<std::string> labels;

  explicit ConfusionMatrix(std::vector<std::string> class_labels = {});
  void add(int truth, int predicted);
  long total() const { return counts.sum(); }
};

enum class BiasCategory { Unbiased, Low, Medium, High };
enum class BiasErrorType { None, TypeI, TypeII };

const char* to_string(BiasCategory category);
const char* to_string(BiasErrorType type);

struct RunMetadata {
  std::string model = "toy";
  std::string similarity = "cosine";
  int n_way = 4;
  int k_shot = 1;
  double seen_fraction = 0.5;
  std::uint64_t seed = 0;
  double t = 0.1;
  double tau = 0.05;
};

struct MetricsReport {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  BiasCategory bias_category = BiasCategory::Unbiased;
  BiasErrorType bias_error_type = BiasErrorType::None;
  RunMetadata metadata;
};

// Accuracy = trace / total. Per-class precision and recall (0/0 -> 0) are
// averaged with weights |class_i| / total; weighted F1 is the harmonic mean
// of weighted precision and weighted recall. Throws EmptyConfusion.
MetricsReport weighted_metrics(const ConfusionMatrix& confusion);

// |P - R| in percentage points: < 1 unbiased, < 3 low, <= 5 medium, else
// high. P > R means missed positives (type II); R > P means type I.
std::pair<BiasCategory, BiasErrorType> bias_classification(double precision, double recall);

std::string to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
};

// Central differences over every scalar of every tensor, compared with
// `analytic` tensor by tensor as ||a - n|| / (||a|| + ||n||). `loss` must
// read the current parameter values.
GradCheckResult grad_check(const std::vector<std::pair<std::string, Eigen::MatrixXd*>>& params,
                           const std::function<double()>& loss,
                           const std::vector<Eigen::MatrixXd>& analytic, double step = 1e-5);

// Analytic gradient of the total episode loss, one matrix per tensor in
// PiaParams::for_each order. `dropout_seed` fixes the dropout draws.
std::vector<Eigen::MatrixXd> pia_gradients(const pia::EpisodeBatch& batch,
                                           const pia::PiaParams& params,
                                           const pia::PiaConfig& config,
                                           std::uint64_t dropout_seed);

// ---------------------------------------------------------------------------

// Memoizes per-utterance embeddings for a fixed backend.
class Embedder {
 public:
  Embedder(const EncoderBackend& backend, int l_seq) : backend_(&backend), l_seq_(l_seq) {}

  const SequenceEmbedding& get(const Utterance& u);
  std::vector<SequenceEmbedding> get_all(const std::vector<LabeledRef>& refs);
  int l_seq() const { return l_seq_; }

 private:
  const EncoderBackend* backend_;
  int l_seq_;
  std::map<std::string, SequenceEmbedding> cache_;
};

pia::EpisodeBatch make_batch(Embedder& embedder, const Episode& episode);

struct TrainConfig {
  double learning_rate = 1e-5;
  long max_episodes = 1000;
  int eval_every = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  AdamConfig adam;  // learning_rate above takes precedence
};

struct HistoryRow {
  long episode = 0;
  pia::LossBreakdown loss;
  std::optional<double> val_accuracy;
  std::optional<double> val_wf1;
};

struct TrainResult {
  pia::PiaParams best_params;
  std::vector<HistoryRow> history;
  double best_val_wf1 = 0.0;
  long episodes_run = 0;
};

// Episodic training on c_train; validation on c_val through test_protocol
// every eval_every episodes and after the last one. Keeps the parameters
// with the best validation weighted F1 and stops after `patience`
// non-improving validations.
TrainResult train(Embedder& embedder, const Corpus& corpus, const ClassSplit& split,
                  const EpisodeSpec& spec, const pia::PiaConfig& pia_config,
                  const TrainConfig& config, const pia::PiaParams& initial);

// Same loop with explicit episode source and validation task. Used when the
// classes are shared between training and evaluation and only utterances
// are held out.
TrainResult train(Embedder& embedder, const Corpus& train_corpus,
                  const std::set<std::string>& train_classes, const Episode& val_task,
                  const EpisodeSpec& spec, const pia::PiaConfig& pia_config,
                  const TrainConfig& config, const pia::PiaParams& initial);

struct Evaluation {
  MetricsReport report;
  ConfusionMatrix confusion;
  std::vector<int> predictions;
  std::vector<int> truth;
};

// Prototypes from the fixed support set, every query scored with `kind`
// (divided by t, which leaves the argmax unchanged).
Evaluation evaluate(Embedder& embedder, const pia::PiaParams& params,
                    const pia::PiaConfig& pia_config, const Episode& test_task,
                    SimilarityKind kind, RunMetadata metadata = {});

// Scores every kind from one pass through the head.
std::vector<Evaluation> evaluate_all(Embedder& embedder, const pia::PiaParams& params,
                                     const pia::PiaConfig& pia_config, const Episode& test_task,
                                     RunMetadata metadata = {});

// episode,ce,ucl1,ucl2,total,val_accuracy,val_wf1
void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path);

}  // namespace fewshot::trainkit
