// fewshot: command-line driver.
//
//   fewshot ingest   --format atis data.txt --out runs/atis
//   fewshot pretrain --corpus runs/atis/corpus.tsv --out runs/enc
//   fewshot train    --corpus ... --encoder runs/enc/encoder.bin --k-shot 5 --out runs/r1
//   fewshot eval     --corpus ... --encoder ... --checkpoint runs/r1/pia.bin --split runs/r1/split.json
//   fewshot report   runs/r1 runs/r2 --out runs
//
// Exit codes: 0 ok, 1 data or runtime error, 2 usage error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fewshot/corpus.hpp"
#include "fewshot/encoder.hpp"
#include "fewshot/episodes.hpp"
#include "fewshot/error.hpp"
#include "fewshot/llmcrl.hpp"
#include "fewshot/pia.hpp"
#include "fewshot/rng.hpp"
#include "fewshot/similarity.hpp"
#include "fewshot/synthetic.hpp"
#include "fewshot/trainkit.hpp"

namespace fs = std::filesystem;
using namespace fewshot;
using nlohmann::ordered_json;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "master seed")->capture_default_str();
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--config", c.config, "flat key=value file; flags take precedence");
}

// CLI11 only reads config files on the top-level app, so subcommand files are
// parsed with its reader and fed to the options that the command line left unset.
void apply_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  if (!fs::is_regular_file(path)) throw CLI::FileError::Missing(path);
  for (const CLI::ConfigItem& item : CLI::ConfigTOML().from_file(path)) {
    if (!item.parents.empty()) throw CLI::ConfigError::Extras(item.fullname());
    if (item.name == "config") throw CLI::ConfigError("config files cannot nest: " + item.name);
    CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr) throw CLI::ConfigError::Extras(item.name);
    if (opt->count() > 0) continue;
    for (const auto& v : item.inputs) opt->add_result(v);
    opt->run_callback();
  }
}

// Writes the fully resolved option set next to the outputs.
void echo_config(const CLI::App* sub, const Common& c) {
  fs::create_directories(c.out);
  std::ofstream out(fs::path(c.out) / (sub->get_name() + "_config.txt"));
  out << sub->config_to_str(true, false);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Corpus load_corpus(const std::string& path, const std::string& format) {
  const auto lines = read_lines(path);
  return format == "atis" ? parse_atis_format(lines) : parse_tsv(lines);
}

// ----- shared backend / split plumbing ---------------------------------------

struct BackendFlags {
  std::string encoder;
  std::string store;
  int d_h = 64;
  int max_len = 32;
};

void add_backend(CLI::App* sub, BackendFlags& b) {
  auto* enc = sub->add_option("--encoder", b.encoder, "toy encoder checkpoint");
  sub->add_option("--store", b.store, "precomputed embedding store directory")->excludes(enc);
  sub->add_option("--d-h", b.d_h, "width of a freshly initialized toy encoder")->capture_default_str();
  sub->add_option("--max-len", b.max_len, "positions of a freshly initialized toy encoder")
      ->capture_default_str();
}

EncoderBackend make_backend(const BackendFlags& b, const Corpus& corpus, std::uint64_t seed) {
  if (!b.store.empty()) return PrecomputedStore::load(b.store);
  if (!b.encoder.empty()) return ToyEncoder::load(b.encoder);
  return ToyEncoder::initialize(Vocabulary::from_corpus(corpus), b.max_len, b.d_h,
                                derive_seed(seed, "encoder"));
}

int backend_width(const EncoderBackend& backend) {
  if (const auto* store = std::get_if<PrecomputedStore>(&backend)) return store->d_h();
  return std::get<ToyEncoder>(backend).d_h();
}

// 0 means the toy encoder's full length, or 32 for a store.
int resolve_l_seq(int l_seq, const EncoderBackend& backend) {
  if (l_seq > 0) return l_seq;
  if (const auto* enc = std::get_if<ToyEncoder>(&backend)) return enc->max_len();
  return 32;
}

std::string model_name(const EncoderBackend& backend) {
  return std::holds_alternative<PrecomputedStore>(backend) ? "store" : "toy";
}

std::string split_to_json(const ClassSplit& s, double val_fraction) {
  ordered_json j;
  j["seen_fraction"] = s.seen_fraction;
  j["val_fraction"] = val_fraction;
  j["seed"] = s.seed;
  j["c_train"] = s.c_train;
  j["c_val"] = s.c_val;
  j["c_test"] = s.c_test;
  return j.dump(2) + "\n";
}

ClassSplit split_from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    ClassSplit s;
    s.seen_fraction = j.at("seen_fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.c_train = j.at("c_train").get<std::set<std::string>>();
    s.c_val = j.at("c_val").get<std::set<std::string>>();
    s.c_test = j.at("c_test").get<std::set<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("split file: ") + e.what());
  }
}

// ----- ingest --------------------------------------------------------------

struct IngestArgs {
  Common common;
  std::string input;
  std::string format = "atis";
  std::size_t min_count = 7;
};

int run_ingest(const CLI::App* sub, const IngestArgs& a) {
  echo_config(sub, a.common);
  const Corpus raw = load_corpus(a.input, a.format);
  const Corpus kept = filter_small_classes(raw, a.min_count);
  write_tsv(kept, (fs::path(a.common.out) / "corpus.tsv").string());

  ordered_json summary;
  summary["input"] = a.input;
  summary["format"] = a.format;
  summary["min_count"] = a.min_count;
  summary["utterances"] = kept.size();
  summary["dropped_utterances"] = raw.size() - kept.size();
  summary["classes"] = kept.label_vocab().size();
  ordered_json hist = ordered_json::object();
  for (const auto& [label, n] : kept.per_class_counts()) hist[label] = n;
  summary["histogram"] = hist;
  write_text(fs::path(a.common.out) / "summary.json", summary.dump(2) + "\n");

  std::cout << kept.label_vocab().size() << " classes, " << kept.size() << " utterances ("
            << raw.size() - kept.size() << " dropped)\n";
  for (const auto& [label, n] : kept.per_class_counts()) std::cout << "  " << label << '\t' << n << '\n';
  return 0;
}

// ----- synth ---------------------------------------------------------------

struct SynthArgs {
  Common common;
  SyntheticSpec spec;
  int max_len = 16;
};

int run_synth(const CLI::App* sub, SynthArgs a) {
  echo_config(sub, a.common);
  a.spec.seed = a.common.seed;
  const Corpus corpus = make_synthetic_corpus(a.spec);
  write_tsv(corpus, (fs::path(a.common.out) / "corpus.tsv").string());
  make_cluster_encoder(corpus, a.spec, a.max_len).save((fs::path(a.common.out) / "encoder.bin").string());
  std::cout << corpus.label_vocab().size() << " classes, " << corpus.size() << " utterances\n";
  return 0;
}

// ----- pretrain ------------------------------------------------------------

struct PretrainArgs {
  Common common;
  std::string corpus;
  std::string format = "tsv";
  BackendFlags backend;
  llmcrl::RetrainConfig retrain;
  llmcrl::MaskingPolicy policy;
  std::string stopwords;
};

int run_pretrain(const CLI::App* sub, PretrainArgs a) {
  echo_config(sub, a.common);
  if (!a.backend.store.empty()) throw Error(ErrorKind::BackendNotTrainable, "precomputed store");
  const Corpus corpus = load_corpus(a.corpus, a.format);
  const EncoderBackend start = make_backend(a.backend, corpus, a.common.seed);
  const auto stopwords = a.stopwords.empty() ? std::set<std::string>{} : llmcrl::load_stopwords(a.stopwords);
  a.retrain.seed = a.common.seed;
  a.policy.seed = derive_seed(a.common.seed, "masking");

  const auto& encoder = std::get<ToyEncoder>(start);
  const auto before = llmcrl::evaluate_loss(encoder, corpus, a.policy, a.retrain, stopwords);
  const auto result = llmcrl::retrain(encoder, corpus, a.policy, a.retrain, stopwords);
  const auto after = llmcrl::evaluate_loss(result.encoder, corpus, a.policy, a.retrain, stopwords);
  result.encoder.save((fs::path(a.common.out) / "encoder.bin").string());
  llmcrl::write_history_csv(result.history, (fs::path(a.common.out) / "pretrain_history.csv").string());
  std::cout << std::setprecision(6) << "steps " << result.history.size() << "  loss " << before.total
            << " -> " << after.total << " (mlm " << after.mlm << ", scl " << after.scl << ")\n";
  return 0;
}

// ----- train ---------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string corpus;
  std::string format = "tsv";
  BackendFlags backend;
  EpisodeSpec spec;
  double seen = 0.5;
  double val_fraction = 0.5;
  int l_seq = 0;
  pia::PiaConfig pia;
  trainkit::TrainConfig train;
};

void add_pia_flags(CLI::App* sub, pia::PiaConfig& p) {
  sub->add_option("--heads", p.heads)->capture_default_str();
  sub->add_option("--hidden", p.hidden_size, "AD layer width")->capture_default_str();
  sub->add_option("--dropout", p.dropout_rate)->capture_default_str();
  sub->add_option("--t", p.metric_temperature, "metric temperature")->capture_default_str();
  sub->add_option("--tau", p.ucl_temperature, "contrastive temperature")->capture_default_str();
}

int run_train(const CLI::App* sub, TrainArgs a) {
  echo_config(sub, a.common);
  const Corpus corpus = load_corpus(a.corpus, a.format);
  const EncoderBackend backend = make_backend(a.backend, corpus, a.common.seed);
  a.pia.d_h = backend_width(backend);
  a.train.seed = a.common.seed;
  const ClassSplit split = make_class_split(corpus, a.seen, a.val_fraction, derive_seed(a.common.seed, "split"));
  if (static_cast<int>(split.c_train.size()) < a.spec.n_way) {
    throw Error(ErrorKind::InsufficientClasses, std::to_string(split.c_train.size()) +
                                                    " seen classes for a " + std::to_string(a.spec.n_way) +
                                                    "-way task");
  }

  trainkit::Embedder embedder(backend, resolve_l_seq(a.l_seq, backend));
  const auto initial = pia::PiaParams::initialize(a.pia, derive_seed(a.common.seed, "pia-init"));
  const auto result = trainkit::train(embedder, corpus, split, a.spec, a.pia, a.train, initial);

  const fs::path out(a.common.out);
  pia::save_checkpoint(result.best_params, a.pia, (out / "pia.bin").string());
  if (std::holds_alternative<ToyEncoder>(backend) && a.backend.encoder.empty()) {
    std::get<ToyEncoder>(backend).save((out / "encoder.bin").string());
  }
  trainkit::write_history_csv(result.history, (out / "history.csv").string());
  write_text(out / "split.json", split_to_json(split, a.val_fraction));
  std::cout << "episodes " << result.episodes_run << "  best val wF1 " << result.best_val_wf1 << '\n';
  return 0;
}

// ----- eval ----------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string corpus;
  std::string format = "tsv";
  BackendFlags backend;
  std::string checkpoint;
  std::string split_file;
  double seen = 0.5;
  double val_fraction = 0.5;
  int k_shot = 1;
  int l_seq = 0;
  std::string similarity = "cosine";
};

std::string sweep_csv(const std::vector<trainkit::Evaluation>& evals) {
  std::ostringstream out;
  out << std::setprecision(10);
  out << "similarity,accuracy,weighted_precision,weighted_recall,weighted_f1,bias_category,bias_error_type\n";
  for (const auto& e : evals) {
    const auto& r = e.report;
    out << r.metadata.similarity << ',' << r.accuracy << ',' << r.weighted_precision << ','
        << r.weighted_recall << ',' << r.weighted_f1 << ',' << trainkit::to_string(r.bias_category) << ','
        << trainkit::to_string(r.bias_error_type) << '\n';
  }
  return out.str();
}

int run_eval(const CLI::App* sub, const EvalArgs& a) {
  echo_config(sub, a.common);
  const Corpus corpus = load_corpus(a.corpus, a.format);
  if (a.backend.encoder.empty() && a.backend.store.empty()) {
    throw CLI::RequiredError("--encoder or --store");
  }
  const EncoderBackend backend = make_backend(a.backend, corpus, a.common.seed);
  pia::PiaConfig pia_config;
  const auto params = pia::load_checkpoint(a.checkpoint, pia_config);
  if (pia_config.d_h != backend_width(backend)) {
    throw Error(ErrorKind::DimensionMismatch, "checkpoint width differs from the encoder");
  }
  const ClassSplit split = a.split_file.empty()
                               ? make_class_split(corpus, a.seen, a.val_fraction, derive_seed(a.common.seed, "split"))
                               : split_from_json(read_text(a.split_file));
  const Episode task = test_protocol(corpus, split.c_test, a.k_shot, derive_seed(a.common.seed, "test"));

  trainkit::RunMetadata meta;
  meta.model = model_name(backend);
  meta.n_way = task.n_way();
  meta.k_shot = a.k_shot;
  meta.seen_fraction = split.seen_fraction;
  meta.seed = a.common.seed;

  trainkit::Embedder embedder(backend, resolve_l_seq(a.l_seq, backend));
  const fs::path out(a.common.out);
  if (a.similarity == "all") {
    const auto evals = trainkit::evaluate_all(embedder, params, pia_config, task, meta);
    write_text(out / "sweep.csv", sweep_csv(evals));
    for (const auto& e : evals) {
      write_text(out / ("metrics_" + e.report.metadata.similarity + ".json"), trainkit::to_json(e.report) + "\n");
    }
    std::cout << sweep_csv(evals);
    return 0;
  }
  const auto kind = parse_similarity(a.similarity);
  const auto ev = trainkit::evaluate(embedder, params, pia_config, task, *kind, meta);
  write_text(out / "metrics.json", trainkit::to_json(ev.report) + "\n");
  std::cout << trainkit::to_json(ev.report) << '\n';
  return 0;
}

// ----- report --------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

int run_report(const ReportArgs& a) {
  using Key = std::tuple<std::string, double, int, std::string>;  // model, seen, shot, similarity
  struct Acc {
    int runs = 0;
    double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  };
  std::map<Key, Acc> table;
  for (const auto& dir : a.runs) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "no such run directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.rfind("metrics", 0) == 0 && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto r = trainkit::report_from_json(read_text(f));
      Acc& acc = table[{r.metadata.model, r.metadata.seen_fraction, r.metadata.k_shot, r.metadata.similarity}];
      ++acc.runs;
      acc.accuracy += r.accuracy;
      acc.precision += r.weighted_precision;
      acc.recall += r.weighted_recall;
      acc.f1 += r.weighted_f1;
    }
  }
  if (table.empty()) throw Error(ErrorKind::Io, "no metrics files found");

  std::ostringstream csv, md;
  csv << std::setprecision(6);
  md << std::fixed << std::setprecision(4);
  csv << "model,seen_fraction,k_shot,similarity,runs,accuracy,weighted_precision,weighted_recall,weighted_f1,"
         "bias_category,bias_error_type\n";
  md << "| model | seen | shot | similarity | runs | accuracy | wP | wR | wF1 | bias |\n"
     << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& [key, acc] : table) {
    const auto& [model, seen, shot, sim] = key;
    const double n = acc.runs;
    const double p = acc.precision / n, r = acc.recall / n;
    const auto [category, type] = trainkit::bias_classification(p, r);
    csv << model << ',' << seen << ',' << shot << ',' << sim << ',' << acc.runs << ',' << acc.accuracy / n << ','
        << p << ',' << r << ',' << acc.f1 / n << ',' << trainkit::to_string(category) << ','
        << trainkit::to_string(type) << '\n';
    md << "| " << model << " | " << std::setprecision(2) << seen << std::setprecision(4) << " | " << shot << " | "
       << sim << " | " << acc.runs << " | " << acc.accuracy / n << " | " << p << " | " << r << " | " << acc.f1 / n
       << " | " << trainkit::to_string(category);
    if (type != trainkit::BiasErrorType::None) md << " (" << trainkit::to_string(type) << ")";
    md << " |\n";
  }
  const fs::path out = a.out.empty() ? fs::path(a.runs.front()) : fs::path(a.out);
  fs::create_directories(out);
  write_text(out / "report.csv", csv.str());
  write_text(out / "report.md", md.str());
  std::cout << md.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot intent detection"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "parse, filter and normalize a corpus");
  add_common(ingest_cmd, ingest.common);
  ingest_cmd->add_option("input", ingest.input, "corpus file")->required();
  ingest_cmd->add_option("--format", ingest.format)->check(CLI::IsMember({"atis", "tsv"}));
  ingest_cmd->add_option("--min-count", ingest.min_count, "drop classes with fewer utterances")
      ->check(CLI::PositiveNumber);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a separable synthetic corpus and matching encoder");
  add_common(synth_cmd, synth.common);
  synth_cmd->add_option("--classes", synth.spec.n_classes)->check(CLI::Range(3, 99));
  synth_cmd->add_option("--per-class", synth.spec.per_class)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--tokens-per-class", synth.spec.tokens_per_class)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--d-h", synth.spec.d_h)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--sigma", synth.spec.sigma)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--separation", synth.spec.separation)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--max-len", synth.max_len)->check(CLI::PositiveNumber);

  PretrainArgs pretrain;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "contrastive re-training of the toy encoder");
  add_common(pretrain_cmd, pretrain.common);
  pretrain_cmd->add_option("--corpus", pretrain.corpus)->required();
  pretrain_cmd->add_option("--format", pretrain.format)->check(CLI::IsMember({"atis", "tsv"}));
  add_backend(pretrain_cmd, pretrain.backend);
  pretrain_cmd->add_option("--epochs", pretrain.retrain.epochs)->check(CLI::NonNegativeNumber);
  pretrain_cmd->add_option("--max-steps", pretrain.retrain.max_steps, "0 = no cap")->check(CLI::NonNegativeNumber);
  pretrain_cmd->add_option("--batch-size", pretrain.retrain.batch_size)->check(CLI::Range(2, 1 << 20));
  pretrain_cmd->add_option("--lr", pretrain.retrain.learning_rate)->check(CLI::PositiveNumber);
  pretrain_cmd->add_option("--scl-tau", pretrain.retrain.scl_temperature)->check(CLI::PositiveNumber);
  pretrain_cmd->add_option("--select-rate", pretrain.policy.select_rate);
  pretrain_cmd->add_option("--mask-frac", pretrain.policy.mask_frac);
  pretrain_cmd->add_option("--random-frac", pretrain.policy.random_frac);
  pretrain_cmd->add_option("--keep-frac", pretrain.policy.keep_frac);
  pretrain_cmd->add_option("--stopwords", pretrain.stopwords, "one token per line");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "episodic training of the attention head");
  add_common(train_cmd, train.common);
  train_cmd->add_option("--corpus", train.corpus)->required();
  train_cmd->add_option("--format", train.format)->check(CLI::IsMember({"atis", "tsv"}));
  add_backend(train_cmd, train.backend);
  train_cmd->add_option("--n-way", train.spec.n_way)->check(CLI::Range(2, 1000));
  train_cmd->add_option("--k-shot", train.spec.k_shot)->check(CLI::PositiveNumber);
  train_cmd->add_option("--q-query", train.spec.q_query)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seen", train.seen, "fraction of classes used for training")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--val-fraction", train.val_fraction, "share of unseen classes for validation")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--l-seq", train.l_seq, "0 = encoder length")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--episodes", train.train.max_episodes)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--eval-every", train.train.eval_every)->check(CLI::PositiveNumber);
  train_cmd->add_option("--patience", train.train.patience)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train.train.learning_rate)->check(CLI::PositiveNumber);
  add_pia_flags(train_cmd, train.pia);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "score the test classes with a trained head");
  add_common(eval_cmd, eval.common);
  eval_cmd->add_option("--corpus", eval.corpus)->required();
  eval_cmd->add_option("--format", eval.format)->check(CLI::IsMember({"atis", "tsv"}));
  add_backend(eval_cmd, eval.backend);
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--split", eval.split_file, "split.json written by train");
  eval_cmd->add_option("--seen", eval.seen)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--val-fraction", eval.val_fraction)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--k-shot", eval.k_shot)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--l-seq", eval.l_seq, "0 = encoder length")->check(CLI::NonNegativeNumber);
  std::vector<std::string> kinds = {"all"};
  for (SimilarityKind k : kAllSimilarityKinds) kinds.emplace_back(similarity_name(k));
  eval_cmd->add_option("--similarity", eval.similarity)->check(CLI::IsMember(kinds));

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "merge metrics from run directories");
  report_cmd->add_option("runs", report.runs, "run directories")->required();
  report_cmd->add_option("--out", report.out, "defaults to the first run directory");

  try {
    app.parse(argc, argv);
    for (auto [cmd, common] : {std::pair{ingest_cmd, &ingest.common}, {synth_cmd, &synth.common},
                               {pretrain_cmd, &pretrain.common}, {train_cmd, &train.common},
                               {eval_cmd, &eval.common}}) {
      if (*cmd) apply_config(cmd, common->config);
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest_cmd, ingest);
    if (*synth_cmd) return run_synth(synth_cmd, synth);
    if (*pretrain_cmd) return run_pretrain(pretrain_cmd, pretrain);
    if (*train_cmd) return run_train(train_cmd, train);
    if (*eval_cmd) return run_eval(eval_cmd, eval);
    if (*report_cmd) return run_report(report);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what();
    if (e.line() != 0) std::cerr << " (line " << e.line() << ')';
    std::cerr << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
