#include "fewshot/trainkit.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "fewshot/error.hpp"

namespace fewshot::trainkit {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_labels)
    : labels(std::move(class_labels)) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  counts = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || truth >= counts.rows() || predicted >= counts.cols()) {
    throw Error(ErrorKind::IndexOutOfRange, "confusion cell");
  }
  ++counts(truth, predicted);
}

const char* to_string(BiasCategory category) {
  switch (category) {
    case BiasCategory::Unbiased: return "unbiased";
    case BiasCategory::Low: return "low";
    case BiasCategory::Medium: return "medium";
    case BiasCategory::High: return "high";
  }
  return "unknown";
}

const char* to_string(BiasErrorType type) {
  switch (type) {
    case BiasErrorType::None: return "none";
    case BiasErrorType::TypeI: return "type_i";
    case BiasErrorType::TypeII: return "type_ii";
  }
  return "unknown";
}

MetricsReport weighted_metrics(const ConfusionMatrix& confusion) {
  const long total = confusion.total();
  if (total <= 0) throw Error(ErrorKind::EmptyConfusion, "no evaluated queries");
  const auto& c = confusion.counts;
  const double n = static_cast<double>(total);
  double wp = 0.0;
  double wr = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    const double tp = static_cast<double>(c(i, i));
    const double support = static_cast<double>(c.row(i).sum());
    const double predicted = static_cast<double>(c.col(i).sum());
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = support > 0 ? tp / support : 0.0;
    wp += support / n * precision;
    wr += support / n * recall;
  }
  MetricsReport r;
  r.accuracy = static_cast<double>(c.trace()) / n;
  r.weighted_precision = wp;
  r.weighted_recall = wr;
  r.weighted_f1 = (wp + wr) > 0 ? 2.0 * wp * wr / (wp + wr) : 0.0;
  std::tie(r.bias_category, r.bias_error_type) = bias_classification(wp, wr);
  return r;
}

std::pair<BiasCategory, BiasErrorType> bias_classification(double precision, double recall) {
  // Rounded so that e.g. 0.80 - 0.75 lands on exactly 5 points.
  const double points = std::round(std::abs(precision - recall) * 100.0 * 1e9) / 1e9;
  if (points < 1.0) return {BiasCategory::Unbiased, BiasErrorType::None};
  const BiasErrorType type = precision > recall ? BiasErrorType::TypeII : BiasErrorType::TypeI;
  if (points < 3.0) return {BiasCategory::Low, type};
  if (points <= 5.0) return {BiasCategory::Medium, type};
  return {BiasCategory::High, type};
}

std::string to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["accuracy"] = r.accuracy;
  j["weighted_precision"] = r.weighted_precision;
  j["weighted_recall"] = r.weighted_recall;
  j["weighted_f1"] = r.weighted_f1;
  j["bias_category"] = to_string(r.bias_category);
  j["bias_error_type"] = to_string(r.bias_error_type);
  j["model"] = r.metadata.model;
  j["similarity"] = r.metadata.similarity;
  j["n_way"] = r.metadata.n_way;
  j["k_shot"] = r.metadata.k_shot;
  j["seen_fraction"] = r.metadata.seen_fraction;
  j["seed"] = r.metadata.seed;
  j["t"] = r.metadata.t;
  j["tau"] = r.metadata.tau;
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, e.what());
  }
  MetricsReport r;
  try {
    r.accuracy = j.at("accuracy").get<double>();
    r.weighted_precision = j.at("weighted_precision").get<double>();
    r.weighted_recall = j.at("weighted_recall").get<double>();
    r.weighted_f1 = j.at("weighted_f1").get<double>();
    std::tie(r.bias_category, r.bias_error_type) =
        bias_classification(r.weighted_precision, r.weighted_recall);
    r.metadata.model = j.at("model").get<std::string>();
    r.metadata.similarity = j.at("similarity").get<std::string>();
    r.metadata.n_way = j.at("n_way").get<int>();
    r.metadata.k_shot = j.at("k_shot").get<int>();
    r.metadata.seen_fraction = j.at("seen_fraction").get<double>();
    r.metadata.seed = j.at("seed").get<std::uint64_t>();
    r.metadata.t = j.at("t").get<double>();
    r.metadata.tau = j.at("tau").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::vector<std::pair<std::string, Eigen::MatrixXd*>>& params,
                           const std::function<double()>& loss,
                           const std::vector<Eigen::MatrixXd>& analytic, double step) {
  if (analytic.size() != params.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one analytic gradient per tensor");
  }
  GradCheckResult result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Eigen::MatrixXd& p = *params[t].second;
    if (analytic[t].rows() != p.rows() || analytic[t].cols() != p.cols()) {
      throw Error(ErrorKind::DimensionMismatch, "gradient shape for " + params[t].first);
    }
    Eigen::MatrixXd numeric(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p(i);
      p(i) = saved + step;
      const double up = loss();
      p(i) = saved - step;
      const double down = loss();
      p(i) = saved;
      numeric(i) = (up - down) / (2.0 * step);
    }
    const double denom = analytic[t].norm() + numeric.norm();
    const double err = denom > 0 ? (analytic[t] - numeric).norm() / denom : 0.0;
    if (t == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_tensor = params[t].first;
    }
  }
  return result;
}

std::vector<Eigen::MatrixXd> pia_gradients(const pia::EpisodeBatch& batch,
                                           const pia::PiaParams& params,
                                           const pia::PiaConfig& config,
                                           std::uint64_t dropout_seed) {
  ad::Tape tape;
  pia::BoundParams bound = pia::bind(tape, params, true);
  Rng rng = make_rng(dropout_seed, "dropout");
  pia::EpisodeGraph g = pia::forward_graph(bound, batch, config, rng);
  tape.backward(g.total);
  std::vector<Eigen::MatrixXd> grads;
  for (const ad::Var& v : bound.list()) grads.push_back(tape.grad(v));
  return grads;
}

// ---------------------------------------------------------------------------

const SequenceEmbedding& Embedder::get(const Utterance& u) {
  auto it = cache_.find(u.id);
  if (it != cache_.end()) return it->second;
  auto encoded = encode_batch(*backend_, {&u}, l_seq_);
  return cache_.emplace(u.id, std::move(encoded.front())).first->second;
}

std::vector<SequenceEmbedding> Embedder::get_all(const std::vector<LabeledRef>& refs) {
  std::vector<SequenceEmbedding> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back(get(*r.utterance));
  return out;
}

pia::EpisodeBatch make_batch(Embedder& embedder, const Episode& episode) {
  pia::EpisodeBatch batch;
  batch.n_way = episode.n_way();
  batch.support = embedder.get_all(episode.support);
  batch.query = embedder.get_all(episode.query);
  for (const auto& r : episode.query) batch.query_labels.push_back(r.class_index);
  return batch;
}

namespace {

struct Representations {
  Eigen::MatrixXd proto;
  Eigen::MatrixXd queries;
  std::vector<int> truth;
};

Representations represent(Embedder& embedder, const pia::PiaParams& params,
                          const pia::PiaConfig& config, const Episode& task) {
  const auto support = embedder.get_all(task.support);
  const auto queries = embedder.get_all(task.query);
  ad::Tape tape;
  pia::BoundParams bound = pia::bind(tape, params, false);
  Representations r;
  r.proto = pia::support_prototypes(bound, support, task.n_way(), config).value();
  r.queries = pia::query_representations(bound, queries, config).value();
  for (const auto& q : task.query) r.truth.push_back(q.class_index);
  return r;
}

Evaluation score_with(const Representations& reps, const pia::PiaConfig& config,
                      const Episode& task, SimilarityKind kind, RunMetadata metadata) {
  Eigen::MatrixXd scores = score_matrix(kind, reps.queries, reps.proto) / config.metric_temperature;
  Evaluation ev{{}, ConfusionMatrix(task.class_map), pia::argmax_rows(scores), reps.truth};
  for (std::size_t i = 0; i < ev.truth.size(); ++i) ev.confusion.add(ev.truth[i], ev.predictions[i]);
  ev.report = weighted_metrics(ev.confusion);
  metadata.similarity = std::string(similarity_name(kind));
  metadata.t = config.metric_temperature;
  metadata.tau = config.ucl_temperature;
  ev.report.metadata = metadata;
  return ev;
}

}  // namespace

Evaluation evaluate(Embedder& embedder, const pia::PiaParams& params,
                    const pia::PiaConfig& pia_config, const Episode& test_task,
                    SimilarityKind kind, RunMetadata metadata) {
  return score_with(represent(embedder, params, pia_config, test_task), pia_config, test_task, kind,
                    std::move(metadata));
}

std::vector<Evaluation> evaluate_all(Embedder& embedder, const pia::PiaParams& params,
                                     const pia::PiaConfig& pia_config, const Episode& test_task,
                                     RunMetadata metadata) {
  const Representations reps = represent(embedder, params, pia_config, test_task);
  std::vector<Evaluation> out;
  for (SimilarityKind kind : kAllSimilarityKinds) {
    out.push_back(score_with(reps, pia_config, test_task, kind, metadata));
  }
  return out;
}

TrainResult train(Embedder& embedder, const Corpus& corpus, const ClassSplit& split,
                  const EpisodeSpec& spec, const pia::PiaConfig& pia_config,
                  const TrainConfig& config, const pia::PiaParams& initial) {
  if (config.max_episodes == 0) return TrainResult{initial, {}, 0.0, 0};
  const Episode val_task = test_protocol(corpus, split.c_val, spec.k_shot,
                                         derive_seed(config.seed, "validation"));
  return train(embedder, corpus, split.c_train, val_task, spec, pia_config, config, initial);
}

TrainResult train(Embedder& embedder, const Corpus& train_corpus,
                  const std::set<std::string>& train_classes, const Episode& val_task,
                  const EpisodeSpec& spec, const pia::PiaConfig& pia_config,
                  const TrainConfig& config, const pia::PiaParams& initial) {
  pia_config.validate();
  if (config.eval_every < 1 || config.patience < 1 || config.max_episodes < 0 ||
      !(config.learning_rate > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "invalid training configuration");
  }
  TrainResult result{initial, {}, 0.0, 0};
  if (config.max_episodes == 0) return result;

  auto validate = [&](const pia::PiaParams& p) {
    return evaluate(embedder, p, pia_config, val_task, SimilarityKind::Cosine).report;
  };

  pia::PiaParams params = initial;
  result.best_val_wf1 = validate(params).weighted_f1;
  AdamConfig adam_config = config.adam;
  adam_config.learning_rate = config.learning_rate;
  Adam adam(adam_config);
  EpisodeSpec episode_spec = spec;
  episode_spec.seed = derive_seed(config.seed, "episodes");
  int stale = 0;

  for (long e = 1; e <= config.max_episodes; ++e) {
    const Episode episode = episode_at(train_corpus, train_classes, episode_spec,
                                       static_cast<std::uint64_t>(e - 1));
    const pia::EpisodeBatch batch = make_batch(embedder, episode);

    ad::Tape tape;
    pia::BoundParams bound = pia::bind(tape, params, true);
    Rng dropout_rng = make_rng(config.seed, "dropout", static_cast<std::uint64_t>(e));
    pia::EpisodeGraph g = pia::forward_graph(bound, batch, pia_config, dropout_rng);
    tape.backward(g.total);
    std::vector<Eigen::MatrixXd> grads;
    for (const ad::Var& v : bound.list()) grads.push_back(tape.grad(v));
    adam.step(params.tensors(), grads);

    HistoryRow row;
    row.episode = e;
    row.loss = {g.ce.scalar(), g.ucl1.scalar(), g.ucl2.scalar(), g.total.scalar()};
    result.episodes_run = e;

    const bool last = e == config.max_episodes;
    if (e % config.eval_every == 0 || last) {
      const MetricsReport val = validate(params);
      row.val_accuracy = val.accuracy;
      row.val_wf1 = val.weighted_f1;
      if (val.weighted_f1 > result.best_val_wf1) {
        result.best_val_wf1 = val.weighted_f1;
        result.best_params = params;
        stale = 0;
      } else {
        ++stale;
      }
    }
    result.history.push_back(row);
    if (stale >= config.patience) break;
  }
  return result;
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "episode,ce,ucl1,ucl2,total,val_accuracy,val_wf1\n" << std::setprecision(10);
  for (const auto& r : history) {
    out << r.episode << ',' << r.loss.ce << ',' << r.loss.ucl1 << ',' << r.loss.ucl2 << ','
        << r.loss.total << ',';
    if (r.val_accuracy) out << *r.val_accuracy;
    out << ',';
    if (r.val_wf1) out << *r.val_wf1;
    out << '\n';
  }
}

}  // namespace fewshot::trainkit
