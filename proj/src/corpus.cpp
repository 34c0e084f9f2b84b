#include "fewshot/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

Corpus::Corpus(std::vector<Utterance> utterances) : utterances_(std::move(utterances)) {
  if (utterances_.empty()) throw Error(ErrorKind::EmptyCorpus, "no utterances");
  for (std::size_t i = 0; i < utterances_.size(); ++i) {
    const Utterance& u = utterances_[i];
    ++counts_[u.label];
    by_label_[u.label].push_back(i);
    if (!by_id_.emplace(u.id, i).second) {
      throw Error(ErrorKind::Format, "duplicate utterance id " + u.id);
    }
  }
  for (const auto& [label, count] : counts_) labels_.push_back(label);
}

std::vector<std::size_t> Corpus::indices_of(const std::string& label) const {
  auto it = by_label_.find(label);
  if (it == by_label_.end()) return {};
  return it->second;
}

const Utterance* Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &utterances_[it->second];
}

std::string nfc_normalize(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::Io, "ICU NFC normalizer unavailable");
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString out = nfc->normalize(in, status);
  if (U_FAILURE(status)) throw Error(ErrorKind::Format, "text is not valid UTF-8");
  std::string result;
  out.toUTF8String(result);
  return result;
}

std::vector<std::string> tokenize(std::string_view text) {
  const std::string normalized = nfc_normalize(text);
  std::vector<std::string> tokens;
  std::string current;
  for (char c : normalized) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

std::string strip_cr(const std::string& line) {
  if (!line.empty() && line.back() == '\r') return line.substr(0, line.size() - 1);
  return line;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace

Corpus parse_atis_format(const std::vector<std::string>& lines) {
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string line = strip_cr(lines[i]);
    if (is_blank(line) || line.front() == '#') continue;
    const auto tokens = tokenize(line);
    auto bos = std::find(tokens.begin(), tokens.end(), "BOS");
    auto eos = std::find(tokens.begin(), tokens.end(), "EOS");
    if (bos != tokens.begin() || eos == tokens.end() || eos < bos) {
      throw Error(ErrorKind::MalformedLine, "expected BOS ... EOS <label>", line_no);
    }
    if (std::distance(eos, tokens.end()) != 2) {
      throw Error(ErrorKind::MalformedLine, "expected exactly one label after EOS", line_no);
    }
    if (eos == bos + 1) throw Error(ErrorKind::EmptyQuery, "no tokens between BOS and EOS", line_no);
    Utterance u;
    u.id = "u" + std::to_string(line_no);
    u.tokens.assign(bos + 1, eos);
    u.raw_text = join(u.tokens);
    u.label = *(eos + 1);
    out.push_back(std::move(u));
  }
  return Corpus(std::move(out));
}

Corpus parse_tsv(const std::vector<std::string>& lines) {
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string line = strip_cr(lines[i]);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw Error(ErrorKind::MalformedLine, "missing tab", line_no);
    const std::string text = line.substr(0, tab);
    const auto label_tokens = tokenize(line.substr(tab + 1));
    if (label_tokens.size() != 1) {
      throw Error(ErrorKind::MalformedLine, "label must be a single non-empty field", line_no);
    }
    Utterance u;
    u.id = "u" + std::to_string(line_no);
    u.tokens = tokenize(text);
    if (u.tokens.empty()) throw Error(ErrorKind::MalformedLine, "empty text field", line_no);
    u.raw_text = nfc_normalize(text);
    u.label = label_tokens.front();
    out.push_back(std::move(u));
  }
  return Corpus(std::move(out));
}

Corpus filter_small_classes(const Corpus& corpus, std::size_t min_count) {
  if (min_count < 1) throw Error(ErrorKind::InvalidArgument, "min_count must be >= 1");
  std::vector<Utterance> kept;
  for (const Utterance& u : corpus.utterances()) {
    if (corpus.per_class_counts().at(u.label) >= min_count) kept.push_back(u);
  }
  if (kept.empty()) throw Error(ErrorKind::EmptyCorpus, "every class is below min_count");
  return Corpus(std::move(kept));
}

ClassSplit make_class_split(const Corpus& corpus, double seen_fraction,
                            double val_fraction_of_unseen, std::uint64_t seed) {
  if (!(seen_fraction > 0.0 && seen_fraction < 1.0) ||
      !(val_fraction_of_unseen >= 0.0 && val_fraction_of_unseen <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "split fractions out of range");
  }
  std::vector<std::string> labels = corpus.label_vocab();
  const auto total = static_cast<long>(labels.size());
  if (total < 3) throw Error(ErrorKind::TooFewClasses, "need at least 3 classes");

  const long n_train = std::max(1L, std::lround(seen_fraction * static_cast<double>(total)));
  const long n_unseen = total - n_train;
  const long n_val = std::lround(val_fraction_of_unseen * static_cast<double>(n_unseen));
  const long n_test = n_unseen - n_val;
  if (n_unseen < 2 || n_val < 1 || n_test < 1) {
    throw Error(ErrorKind::TooFewClasses, "train/val/test class sets cannot all be non-empty");
  }

  Rng rng = make_rng(seed, "class-split");
  std::shuffle(labels.begin(), labels.end(), rng);

  ClassSplit split;
  split.seen_fraction = seen_fraction;
  split.seed = seed;
  for (long i = 0; i < total; ++i) {
    const auto& label = labels[static_cast<std::size_t>(i)];
    if (i < n_train) {
      split.c_train.insert(label);
    } else if (i < n_train + n_val) {
      split.c_val.insert(label);
    } else {
      split.c_test.insert(label);
    }
  }
  return split;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_tsv(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  for (const Utterance& u : corpus.utterances()) out << join(u.tokens) << '\t' << u.label << '\n';
}

}  // namespace fewshot
