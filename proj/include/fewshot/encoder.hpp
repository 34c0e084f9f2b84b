#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fewshot/autodiff.hpp"
#include "fewshot/corpus.hpp"

namespace fewshot {

using Matrix = Eigen::MatrixXd;
using RowMask = ad::RowMask;

// Token-level utterance embedding: one row per position, `mask(i)` false
// on padding rows.
struct SequenceEmbedding {
  Matrix values;
  RowMask mask;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index width() const { return values.cols(); }
  Eigen::Index valid_count() const { return mask.count(); }
};

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr const char* kUnkToken = "[UNK]";

struct PaddedTokens {
  std::vector<std::string> tokens;
  RowMask mask;
};

// Keeps the prefix when too long, right-pads with [PAD] when too short.
PaddedTokens pad_or_truncate(const std::vector<std::string>& tokens, int l_seq);

// Embeddings computed elsewhere, keyed by utterance id. On disk: index.json
// plus data.f32 (row-major float32 little-endian matrices).
class PrecomputedStore {
 public:
  struct Entry {
    std::string id;
    Eigen::MatrixXf values;
  };

  PrecomputedStore() = default;
  explicit PrecomputedStore(int d_h) : d_h_(d_h) {}

  // Appends in serialization order. Throws DimensionMismatch on width change.
  void insert(std::string id, Eigen::MatrixXf values);
  const Eigen::MatrixXf& at(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  int d_h() const { return d_h_; }
  std::size_t size() const { return entries_.size(); }

  static PrecomputedStore load(const std::string& dir);
  void save(const std::string& dir) const;

 private:
  int d_h_ = 0;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kUnk = 2;

  Vocabulary();
  // Reserved tokens first, then corpus tokens in lexicographic order.
  static Vocabulary from_corpus(const Corpus& corpus);
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

struct ToyEncoderParams {
  Matrix token_embedding;     // vocab x d_h
  Matrix position_embedding;  // max_len x d_h
  Matrix w_q, w_k, w_v;       // d_h x d_h
  Matrix w_out;               // d_h x d_h
  Matrix b_out;               // 1 x d_h
  Matrix mlm_head;            // d_h x vocab

  template <typename F>
  void for_each(F&& f) {
    f("token_embedding", token_embedding);
    f("position_embedding", position_embedding);
    f("w_q", w_q);
    f("w_k", w_k);
    f("w_v", w_v);
    f("w_out", w_out);
    f("b_out", b_out);
    f("mlm_head", mlm_head);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ToyEncoderParams*>(this)->for_each(
        [&f](const char* name, Matrix& m) { f(name, static_cast<const Matrix&>(m)); });
  }
};

// Small trainable encoder: token + position embedding, one masked
// self-attention layer with a residual connection, then a position-wise
// affine map. Stands in for a pretrained transformer at desk scale.
class ToyEncoder {
 public:
  ToyEncoder() = default;
  ToyEncoder(Vocabulary vocab, ToyEncoderParams params);

  static ToyEncoder initialize(Vocabulary vocab, int max_len, int d_h, std::uint64_t seed);
  static ToyEncoder zeros(Vocabulary vocab, int max_len, int d_h);

  const Vocabulary& vocab() const { return vocab_; }
  const ToyEncoderParams& params() const { return params_; }
  ToyEncoderParams& params() { return params_; }
  int d_h() const { return static_cast<int>(params_.token_embedding.cols()); }
  int max_len() const { return static_cast<int>(params_.position_embedding.rows()); }

  std::vector<int> ids(const std::vector<std::string>& tokens) const;

  // Parameters placed on a tape, tracked or constant.
  struct Bound {
    ad::Var token_embedding, position_embedding, w_q, w_k, w_v, w_out, b_out, mlm_head;
  };
  Bound bind(ad::Tape& tape, bool trainable) const;
  // Returns the L x d_h contextual representation of one padded sequence.
  ad::Var forward(const Bound& bound, const std::vector<int>& ids, const RowMask& mask) const;

  void save(const std::string& path) const;
  static ToyEncoder load(const std::string& path);

 private:
  Vocabulary vocab_;
  ToyEncoderParams params_;
};

using EncoderBackend = std::variant<PrecomputedStore, ToyEncoder>;

// One embedding per utterance, order preserved, each padded/truncated to
// l_seq rows.
std::vector<SequenceEmbedding> encode_batch(const EncoderBackend& backend,
                                            const std::vector<const Utterance*>& utterances,
                                            int l_seq);

// MLM logits (|positions| x vocab) from the contextual vectors of an
// already-corrupted token sequence. Throws BackendNotTrainable for stores.
Matrix mlm_logits(const EncoderBackend& backend, const std::vector<std::string>& masked_tokens,
                  const std::vector<int>& mask_positions);

}  // namespace fewshot
