#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace fewshot {

struct Utterance {
  std::string id;
  std::string raw_text;
  std::vector<std::string> tokens;
  std::string label;
};

// Immutable labeled collection. Labels are kept in lexicographic order so
// every downstream index is independent of file order.
class Corpus {
 public:
  Corpus() = default;
  // Throws EmptyCorpus when `utterances` is empty.
  explicit Corpus(std::vector<Utterance> utterances);

  const std::vector<Utterance>& utterances() const { return utterances_; }
  const std::vector<std::string>& label_vocab() const { return labels_; }
  const std::map<std::string, std::size_t>& per_class_counts() const { return counts_; }

  std::size_t size() const { return utterances_.size(); }
  bool has_label(const std::string& label) const { return counts_.count(label) != 0; }

  // Indices into utterances() carrying `label`, in corpus order.
  std::vector<std::size_t> indices_of(const std::string& label) const;

  // Utterance lookup by id; nullptr when absent.
  const Utterance* find(const std::string& id) const;

 private:
  std::vector<Utterance> utterances_;
  std::vector<std::string> labels_;
  std::map<std::string, std::size_t> counts_;
  std::map<std::string, std::vector<std::size_t>> by_label_;
  std::map<std::string, std::size_t> by_id_;
};

struct ClassSplit {
  double seen_fraction = 0.5;
  std::set<std::string> c_train;
  std::set<std::string> c_val;
  std::set<std::string> c_test;
  std::uint64_t seed = 0;
};

// NFC-normalizes UTF-8 text and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);
std::string nfc_normalize(std::string_view text);

// `BOS tok... EOS label` per line; blank and `#` lines are skipped. Utterance
// ids are "u<line number>".
Corpus parse_atis_format(const std::vector<std::string>& lines);

// `text<TAB>label` per line, no header. Same id scheme.
Corpus parse_tsv(const std::vector<std::string>& lines);

Corpus filter_small_classes(const Corpus& corpus, std::size_t min_count = 7);

ClassSplit make_class_split(const Corpus& corpus, double seen_fraction,
                            double val_fraction_of_unseen, std::uint64_t seed);

std::vector<std::string> read_lines(const std::string& path);

// Writes the corpus as TSV (text<TAB>label).
void write_tsv(const Corpus& corpus, const std::string& path);

}  // namespace fewshot
