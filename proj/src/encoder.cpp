#include "fewshot/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

#include "fewshot/binary_io.hpp"
#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot {

namespace fs = std::filesystem;

PaddedTokens pad_or_truncate(const std::vector<std::string>& tokens, int l_seq) {
  if (l_seq < 1) throw Error(ErrorKind::InvalidArgument, "l_seq must be >= 1");
  PaddedTokens out;
  out.tokens.assign(static_cast<std::size_t>(l_seq), kPadToken);
  out.mask = RowMask::Constant(l_seq, false);
  const auto n = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(l_seq));
  for (std::size_t i = 0; i < n; ++i) {
    out.tokens[i] = tokens[i];
    out.mask(static_cast<Eigen::Index>(i)) = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// PrecomputedStore

void PrecomputedStore::insert(std::string id, Eigen::MatrixXf values) {
  if (d_h_ == 0) d_h_ = static_cast<int>(values.cols());
  if (values.cols() != d_h_) throw Error(ErrorKind::DimensionMismatch, "store width for " + id);
  if (values.rows() < 1) throw Error(ErrorKind::InvalidArgument, "empty embedding for " + id);
  if (index_.count(id)) throw Error(ErrorKind::Format, "duplicate store id " + id);
  index_.emplace(id, entries_.size());
  entries_.push_back(Entry{std::move(id), std::move(values)});
}

const Eigen::MatrixXf& PrecomputedStore::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorKind::MissingEmbedding, id);
  return entries_[it->second].values;
}

PrecomputedStore PrecomputedStore::load(const std::string& dir) {
  std::ifstream index_in(fs::path(dir) / "index.json");
  if (!index_in) throw Error(ErrorKind::Io, "cannot open " + dir + "/index.json");
  nlohmann::json index;
  try {
    index_in >> index;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("index.json: ") + e.what());
  }
  std::ifstream data(fs::path(dir) / "data.f32", std::ios::binary);
  if (!data) throw Error(ErrorKind::Io, "cannot open " + dir + "/data.f32");

  struct Item {
    std::uint64_t offset;
    std::string id;
    int rows, cols;
  };
  std::vector<Item> items;
  for (const auto& [id, meta] : index.items()) {
    items.push_back(Item{meta.at("offset_bytes").get<std::uint64_t>(), id,
                         meta.at("l_seq").get<int>(), meta.at("d_h").get<int>()});
  }
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.offset < b.offset; });

  PrecomputedStore store;
  for (const Item& item : items) {
    Eigen::MatrixXf m(item.rows, item.cols);
    data.seekg(static_cast<std::streamoff>(item.offset));
    for (int r = 0; r < item.rows; ++r) {
      for (int c = 0; c < item.cols; ++c) m(r, c) = io::read_pod<float>(data);
    }
    store.insert(item.id, std::move(m));
  }
  return store;
}

void PrecomputedStore::save(const std::string& dir) const {
  fs::create_directories(dir);
  std::ofstream data(fs::path(dir) / "data.f32", std::ios::binary);
  if (!data) throw Error(ErrorKind::Io, "cannot write " + dir + "/data.f32");
  nlohmann::json index = nlohmann::json::object();
  std::uint64_t offset = 0;
  for (const Entry& e : entries_) {
    index[e.id] = {{"offset_bytes", offset}, {"l_seq", e.values.rows()}, {"d_h", e.values.cols()}};
    for (Eigen::Index r = 0; r < e.values.rows(); ++r) {
      for (Eigen::Index c = 0; c < e.values.cols(); ++c) io::write_pod<float>(data, e.values(r, c));
    }
    offset += static_cast<std::uint64_t>(e.values.size()) * sizeof(float);
  }
  std::ofstream index_out(fs::path(dir) / "index.json", std::ios::binary);
  index_out << index.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : tokens_{kPadToken, kMaskToken, kUnkToken} {
  for (int i = 0; i < 3; ++i) ids_[tokens_[static_cast<std::size_t>(i)]] = i;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (v.ids_.count(t)) continue;
    v.ids_[t] = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(t);
  }
  return v;
}

Vocabulary Vocabulary::from_corpus(const Corpus& corpus) {
  std::set<std::string> seen;
  for (const auto& u : corpus.utterances()) seen.insert(u.tokens.begin(), u.tokens.end());
  return from_tokens(std::vector<std::string>(seen.begin(), seen.end()));
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

// ---------------------------------------------------------------------------
// ToyEncoder

ToyEncoder::ToyEncoder(Vocabulary vocab, ToyEncoderParams params)
    : vocab_(std::move(vocab)), params_(std::move(params)) {
  const auto d = params_.token_embedding.cols();
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  bool ok = params_.token_embedding.rows() == v && params_.position_embedding.cols() == d &&
            params_.w_q.rows() == d && params_.w_q.cols() == d && params_.w_k.rows() == d &&
            params_.w_k.cols() == d && params_.w_v.rows() == d && params_.w_v.cols() == d &&
            params_.w_out.rows() == d && params_.w_out.cols() == d && params_.b_out.rows() == 1 &&
            params_.b_out.cols() == d && params_.mlm_head.rows() == d &&
            params_.mlm_head.cols() == v;
  if (!ok) throw Error(ErrorKind::DimensionMismatch, "toy encoder parameter shapes");
}

ToyEncoder ToyEncoder::zeros(Vocabulary vocab, int max_len, int d_h) {
  ToyEncoderParams p;
  const Eigen::Index v = vocab.size();
  p.token_embedding = Matrix::Zero(v, d_h);
  p.position_embedding = Matrix::Zero(max_len, d_h);
  p.w_q = p.w_k = p.w_v = p.w_out = Matrix::Zero(d_h, d_h);
  p.b_out = Matrix::Zero(1, d_h);
  p.mlm_head = Matrix::Zero(d_h, v);
  return ToyEncoder(std::move(vocab), std::move(p));
}

ToyEncoder ToyEncoder::initialize(Vocabulary vocab, int max_len, int d_h, std::uint64_t seed) {
  ToyEncoder enc = zeros(std::move(vocab), max_len, d_h);
  Rng rng = make_rng(seed, "toy-encoder-init");
  std::normal_distribution<double> unit(0.0, 1.0);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_h));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  auto fill = [&rng](Matrix& m, auto& dist, double gain) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = gain * dist(rng);
  };
  ToyEncoderParams& p = enc.params_;
  fill(p.token_embedding, unit, 1.0);
  fill(p.position_embedding, unit, 0.1);
  fill(p.w_q, uniform, 1.0);
  fill(p.w_k, uniform, 1.0);
  fill(p.w_v, uniform, 1.0);
  fill(p.w_out, uniform, 1.0);
  fill(p.mlm_head, uniform, 1.0);
  return enc;
}

std::vector<int> ToyEncoder::ids(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab_.id(t));
  return out;
}

ToyEncoder::Bound ToyEncoder::bind(ad::Tape& tape, bool trainable) const {
  auto put = [&](const Matrix& m) { return trainable ? tape.variable(m) : tape.constant(m); };
  return Bound{put(params_.token_embedding), put(params_.position_embedding),
               put(params_.w_q), put(params_.w_k), put(params_.w_v), put(params_.w_out),
               put(params_.b_out), put(params_.mlm_head)};
}

ad::Var ToyEncoder::forward(const Bound& b, const std::vector<int>& ids,
                            const RowMask& mask) const {
  const auto len = static_cast<Eigen::Index>(ids.size());
  if (len > max_len()) throw Error(ErrorKind::DimensionMismatch, "sequence longer than max_len");
  if (mask.size() != len) throw Error(ErrorKind::DimensionMismatch, "mask length");
  using namespace ad;
  Var x = add(gather_rows(b.token_embedding, ids), slice_rows(b.position_embedding, 0, len));
  Var q = matmul_nt(x, b.w_q);
  Var k = matmul_nt(x, b.w_k);
  Var v = matmul_nt(x, b.w_v);
  Var scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_h())));
  Var context = matmul(softmax_rows(scores, &mask), v);
  Var hidden = add(x, context);
  return add_row(matmul_nt(hidden, b.w_out), b.b_out);
}

void ToyEncoder::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write("FSTOYEN1", 8);
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_.size()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(max_len()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d_h()));
  for (const auto& t : vocab_.tokens()) io::write_string(out, t);
  params_.for_each([&out](const char* name, const Matrix& m) { io::write_tensor(out, name, m); });
}

ToyEncoder ToyEncoder::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "FSTOYEN1") throw Error(ErrorKind::Format, "not an encoder checkpoint");
  if (io::read_pod<std::uint32_t>(in) != 1) throw Error(ErrorKind::Format, "unsupported version");
  const auto vocab_size = io::read_pod<std::uint32_t>(in);
  io::read_pod<std::uint32_t>(in);  // max_len, implied by the position table
  io::read_pod<std::uint32_t>(in);  // d_h
  std::vector<std::string> tokens;
  for (std::uint32_t i = 0; i < vocab_size; ++i) tokens.push_back(io::read_string(in));
  if (tokens.size() < 3 || tokens[0] != kPadToken || tokens[1] != kMaskToken ||
      tokens[2] != kUnkToken) {
    throw Error(ErrorKind::Format, "vocabulary must start with reserved tokens");
  }
  Vocabulary vocab = Vocabulary::from_tokens({tokens.begin() + 3, tokens.end()});
  ToyEncoderParams p;
  p.for_each([&in](const char* name, Matrix& m) { m = io::read_tensor(in, name); });
  return ToyEncoder(std::move(vocab), std::move(p));
}

// ---------------------------------------------------------------------------

std::vector<SequenceEmbedding> encode_batch(const EncoderBackend& backend,
                                            const std::vector<const Utterance*>& utterances,
                                            int l_seq) {
  if (l_seq < 1) throw Error(ErrorKind::InvalidArgument, "l_seq must be >= 1");
  std::vector<SequenceEmbedding> out;
  out.reserve(utterances.size());
  if (const auto* store = std::get_if<PrecomputedStore>(&backend)) {
    for (const Utterance* u : utterances) {
      const Eigen::MatrixXf& m = store->at(u->id);
      const Eigen::Index rows = std::min<Eigen::Index>(m.rows(), l_seq);
      SequenceEmbedding e;
      e.values = Matrix::Zero(l_seq, m.cols());
      e.values.topRows(rows) = m.topRows(rows).cast<double>();
      e.mask = RowMask::Constant(l_seq, false);
      e.mask.head(rows).setConstant(true);
      out.push_back(std::move(e));
    }
    return out;
  }
  const auto& enc = std::get<ToyEncoder>(backend);
  for (const Utterance* u : utterances) {
    PaddedTokens padded = pad_or_truncate(u->tokens, l_seq);
    ad::Tape tape;
    auto bound = enc.bind(tape, false);
    ad::Var h = enc.forward(bound, enc.ids(padded.tokens), padded.mask);
    SequenceEmbedding e;
    e.values = h.value();
    // Padding rows are zeroed so they carry no information downstream.
    for (Eigen::Index r = 0; r < e.values.rows(); ++r) {
      if (!padded.mask(r)) e.values.row(r).setZero();
    }
    e.mask = padded.mask;
    out.push_back(std::move(e));
  }
  return out;
}

Matrix mlm_logits(const EncoderBackend& backend, const std::vector<std::string>& masked_tokens,
                  const std::vector<int>& mask_positions) {
  const auto* enc = std::get_if<ToyEncoder>(&backend);
  if (enc == nullptr) throw Error(ErrorKind::BackendNotTrainable, "precomputed store");
  RowMask mask(static_cast<Eigen::Index>(masked_tokens.size()));
  for (std::size_t i = 0; i < masked_tokens.size(); ++i) {
    mask(static_cast<Eigen::Index>(i)) = masked_tokens[i] != kPadToken;
  }
  ad::Tape tape;
  auto bound = enc->bind(tape, false);
  ad::Var h = enc->forward(bound, enc->ids(masked_tokens), mask);
  Matrix logits(static_cast<Eigen::Index>(mask_positions.size()), enc->vocab().size());
  for (std::size_t i = 0; i < mask_positions.size(); ++i) {
    const int p = mask_positions[i];
    if (p < 0 || p >= h.rows()) throw Error(ErrorKind::IndexOutOfRange, "mask position");
    logits.row(static_cast<Eigen::Index>(i)) = h.value().row(p) * enc->params().mlm_head;
  }
  return logits;
}

}  // namespace fewshot
