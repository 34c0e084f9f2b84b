#include "fewshot/pia.hpp"

#include <cmath>
#include <fstream>

#include "fewshot/binary_io.hpp"
#include "fewshot/contrastive.hpp"
#include "fewshot/error.hpp"

namespace fewshot::pia {

using ad::Var;

void PiaConfig::validate() const {
  if (d_h < 1 || heads < 1 || d_h % heads != 0) {
    throw Error(ErrorKind::InvalidArgument, "heads must divide d_h");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "dropout_rate must lie in [0, 1)");
  }
  if (!(metric_temperature > 0.0) || !(ucl_temperature > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "temperatures must be positive");
  }
  if (hidden_size < 1) throw Error(ErrorKind::InvalidArgument, "hidden_size must be positive");
}

PiaParams PiaParams::initialize(const PiaConfig& config, std::uint64_t seed) {
  config.validate();
  const int d = config.d_h;
  const int h = config.hidden_size;
  Rng rng = make_rng(seed, "pia-init");
  auto uniform = [&rng](Eigen::Index rows, Eigen::Index cols, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
    return m;
  };
  PiaParams p;
  p.fiat.w_q = uniform(d, d, d);
  p.fiat.w_k = uniform(d, d, d);
  p.fiat.w_v = uniform(d, d, d);
  p.fiat.b_q = p.fiat.b_k = p.fiat.b_v = Matrix::Zero(1, d);
  p.fiat.ln_sent_gain = p.fiat.ln_class_gain = p.fiat.ln_query_gain = Matrix::Ones(1, d);
  // Positive offsets keep both inputs of the harmonic fusion above zero.
  p.fiat.ln_sent_bias = p.fiat.ln_class_bias = p.fiat.ln_query_bias =
      Matrix::Constant(1, d, kLayerNormBiasInit);
  p.pi.w_pi = Matrix::Zero(d, d);
  p.pi.b_pi = Matrix::Zero(1, d);
  p.ad.w1 = uniform(h, d, d);
  p.ad.b1 = Matrix::Zero(1, h);
  p.ad.w2 = uniform(d, h, h);
  p.ad.b2 = Matrix::Zero(1, d);
  return p;
}

std::vector<Matrix*> PiaParams::tensors() {
  std::vector<Matrix*> out;
  for_each([&out](const char*, Matrix& m) { out.push_back(&m); });
  return out;
}

void save_checkpoint(const PiaParams& params, const PiaConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write("FSPIACK1", 8);
  io::write_pod<std::uint32_t>(out, 1);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.d_h()));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(config.heads));
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.hidden_size()));
  std::uint32_t count = 0;
  params.for_each([&count](const char*, const Matrix&) { ++count; });
  io::write_pod<std::uint32_t>(out, count);
  params.for_each([&out](const char* name, const Matrix& m) { io::write_tensor(out, name, m); });
}

PiaParams load_checkpoint(const std::string& path, PiaConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "FSPIACK1") throw Error(ErrorKind::Format, "not a PIA checkpoint");
  if (io::read_pod<std::uint32_t>(in) != 1) throw Error(ErrorKind::Format, "unsupported version");
  config.d_h = static_cast<int>(io::read_pod<std::uint32_t>(in));
  config.heads = static_cast<int>(io::read_pod<std::uint32_t>(in));
  config.hidden_size = static_cast<int>(io::read_pod<std::uint32_t>(in));
  const auto count = io::read_pod<std::uint32_t>(in);
  PiaParams p;
  std::uint32_t seen = 0;
  p.for_each([&](const char* name, Matrix& m) {
    m = io::read_tensor(in, name);
    ++seen;
  });
  if (seen != count) throw Error(ErrorKind::Format, "tensor count mismatch");
  config.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Graph construction

std::vector<Var> BoundParams::list() const {
  return {w_q,           w_k,           w_v,           b_q,          b_k,
          b_v,           ln_sent_gain,  ln_sent_bias,  ln_class_gain, ln_class_bias,
          ln_query_gain, ln_query_bias, w_pi,          b_pi,         w1,
          b1,            w2,            b2};
}

BoundParams bind(ad::Tape& tape, const PiaParams& params, bool trainable) {
  std::vector<Var> vars;
  params.for_each([&](const char*, const Matrix& m) {
    vars.push_back(trainable ? tape.variable(m) : tape.constant(m));
  });
  BoundParams b;
  std::size_t i = 0;
  for (Var* slot : {&b.w_q, &b.w_k, &b.w_v, &b.b_q, &b.b_k, &b.b_v, &b.ln_sent_gain,
                    &b.ln_sent_bias, &b.ln_class_gain, &b.ln_class_bias, &b.ln_query_gain,
                    &b.ln_query_bias, &b.w_pi, &b.b_pi, &b.w1, &b.b1, &b.w2, &b.b2}) {
    *slot = vars[i++];
  }
  return b;
}

namespace {

struct Qkv {
  Var q, k, v;
};

Qkv project(const BoundParams& p, Var x) {
  if (x.cols() != p.w_q.cols()) throw Error(ErrorKind::DimensionMismatch, "embedding width != d_h");
  return {ad::add_row(ad::matmul_nt(x, p.w_q), p.b_q), ad::add_row(ad::matmul_nt(x, p.w_k), p.b_k),
          ad::add_row(ad::matmul_nt(x, p.w_v), p.b_v)};
}

// Multi-head self-attention along the sequence axis; L x d_h.
Var sequence_attention(const Qkv& qkv, const RowMask& mask, int heads) {
  const Eigen::Index dh = qkv.q.cols() / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(qkv.q, h * dh, dh);
    Var kh = ad::slice_cols(qkv.k, h * dh, dh);
    Var vh = ad::slice_cols(qkv.v, h * dh, dh);
    Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv), &mask);
    outs.push_back(ad::matmul(weights, vh));
  }
  return ad::concat_cols(outs);
}

// Feature-major attention over all positions of one class: for each head the
// d_head features attend to each other, with affinities summed over the valid
// positions of all K shots. Returns (K*L) x d_h.
Var class_attention(const Qkv& qkv, const RowMask& mask, int heads) {
  const Eigen::Index dh = qkv.q.cols() / heads;
  const Eigen::Index valid = mask.count();
  if (valid == 0) throw Error(ErrorKind::AllMasked, "class has no valid positions");
  Matrix keep = mask.cast<double>().matrix().replicate(1, qkv.q.cols());
  ad::Tape& tape = *qkv.q.tape;
  Var keep_var = tape.constant(std::move(keep));
  Var q = ad::cwise_mul(qkv.q, keep_var);
  Var k = ad::cwise_mul(qkv.k, keep_var);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(q, h * dh, dh);
    Var kh = ad::slice_cols(k, h * dh, dh);
    Var vh = ad::slice_cols(qkv.v, h * dh, dh);
    Var weights = ad::softmax_rows(ad::scale(ad::matmul_tn(qh, kh), inv));  // dh x dh
    outs.push_back(ad::matmul_nt(vh, weights));                            // P x dh
  }
  return ad::concat_cols(outs);
}

void check_support(std::span<const SequenceEmbedding> support, int n_way) {
  if (n_way < 1 || support.empty() || support.size() % static_cast<std::size_t>(n_way) != 0) {
    throw Error(ErrorKind::DimensionMismatch, "support size must be a multiple of n_way");
  }
  const Eigen::Index len = support.front().length();
  for (const auto& s : support) {
    if (s.length() != len) throw Error(ErrorKind::DimensionMismatch, "support sequence lengths differ");
  }
}

struct SupportBranches {
  Var i_sent;  // (N*K) x d_h
  Var i_cla;   // (N*K) x d_h
};

SupportBranches support_branches(const BoundParams& p, std::span<const SequenceEmbedding> support,
                                 int n_way, const PiaConfig& config) {
  check_support(support, n_way);
  ad::Tape& tape = *p.w_q.tape;
  const std::size_t k_shot = support.size() / static_cast<std::size_t>(n_way);
  const Eigen::Index len = support.front().length();
  std::vector<Var> sent_rows, class_rows;
  for (int n = 0; n < n_way; ++n) {
    std::vector<Var> xs;
    RowMask class_mask(static_cast<Eigen::Index>(k_shot) * len);
    for (std::size_t k = 0; k < k_shot; ++k) {
      const auto& emb = support[static_cast<std::size_t>(n) * k_shot + k];
      xs.push_back(tape.constant(emb.values));
      class_mask.segment(static_cast<Eigen::Index>(k) * len, len) = emb.mask;
    }
    Qkv stacked = project(p, ad::concat_rows(xs));
    for (std::size_t k = 0; k < k_shot; ++k) {
      const auto& emb = support[static_cast<std::size_t>(n) * k_shot + k];
      const Eigen::Index at = static_cast<Eigen::Index>(k) * len;
      Qkv one{ad::slice_rows(stacked.q, at, len), ad::slice_rows(stacked.k, at, len),
              ad::slice_rows(stacked.v, at, len)};
      Var ctx = sequence_attention(one, emb.mask, config.heads);
      sent_rows.push_back(ad::layer_norm_rows(ad::max_pool_rows(ctx, emb.mask), p.ln_sent_gain,
                                              p.ln_sent_bias));
    }
    Var cla = class_attention(stacked, class_mask, config.heads);
    for (std::size_t k = 0; k < k_shot; ++k) {
      const auto& emb = support[static_cast<std::size_t>(n) * k_shot + k];
      Var rows = ad::slice_rows(cla, static_cast<Eigen::Index>(k) * len, len);
      class_rows.push_back(ad::layer_norm_rows(ad::max_pool_rows(rows, emb.mask), p.ln_class_gain,
                                               p.ln_class_bias));
    }
  }
  return {ad::concat_rows(sent_rows), ad::concat_rows(class_rows)};
}

Var pi_graph(Var proto1, int n_way, Var w_pi, Var b_pi) {
  if (proto1.rows() % n_way != 0) throw Error(ErrorKind::DimensionMismatch, "proto1 rows");
  if (w_pi.cols() != proto1.cols()) throw Error(ErrorKind::DimensionMismatch, "PI layer width");
  const Eigen::Index k_shot = proto1.rows() / n_way;
  std::vector<Var> protos;
  for (int n = 0; n < n_way; ++n) {
    Var shots = ad::slice_rows(proto1, n * k_shot, k_shot);
    Var scores = ad::row_mean(ad::tanh(ad::add_row(ad::matmul_nt(shots, w_pi), b_pi)));  // K x 1
    Var weights = ad::softmax_rows(ad::transpose(scores));                               // 1 x K
    protos.push_back(ad::matmul(weights, shots));
  }
  return ad::concat_rows(protos);
}

Var ad_graph(Var x, Var w1, Var b1, Var w2, Var b2) {
  if (x.cols() != w1.cols()) throw Error(ErrorKind::DimensionMismatch, "AD layer width");
  Var hidden = ad::relu(ad::add_row(ad::matmul_nt(x, w1), b1));
  return ad::add_row(ad::matmul_nt(hidden, w2), b2);
}

Var query_sentence(const BoundParams& p, std::span<const SequenceEmbedding> queries,
                   const PiaConfig& config) {
  if (queries.empty()) throw Error(ErrorKind::DimensionMismatch, "no queries");
  ad::Tape& tape = *p.w_q.tape;
  std::vector<Var> rows;
  for (const auto& emb : queries) {
    Qkv qkv = project(p, tape.constant(emb.values));
    Var ctx = sequence_attention(qkv, emb.mask, config.heads);
    Var normed = ad::layer_norm_rows(ctx, p.ln_query_gain, p.ln_query_bias);
    rows.push_back(ad::max_pool_rows(normed, emb.mask));
  }
  return ad::concat_rows(rows);
}

std::vector<SequenceEmbedding> with_dropout(const std::vector<SequenceEmbedding>& in, double rate,
                                            Rng& rng) {
  if (rate <= 0.0) return in;
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  std::vector<SequenceEmbedding> out = in;
  for (auto& e : out) {
    for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values(i) = keep(rng) ? e.values(i) * inv : 0.0;
  }
  return out;
}

}  // namespace

Var support_prototypes(const BoundParams& p, std::span<const SequenceEmbedding> support, int n_way,
                       const PiaConfig& config) {
  SupportBranches br = support_branches(p, support, n_way, config);
  Var proto1 = ad::harmonic(br.i_sent, br.i_cla);
  Var proto2 = pi_graph(proto1, n_way, p.w_pi, p.b_pi);
  return ad_graph(proto2, p.w1, p.b1, p.w2, p.b2);
}

Var query_representations(const BoundParams& p, std::span<const SequenceEmbedding> queries,
                          const PiaConfig& config) {
  return ad_graph(query_sentence(p, queries, config), p.w1, p.b1, p.w2, p.b2);
}

EpisodeGraph forward_graph(const BoundParams& p, const EpisodeBatch& batch,
                           const PiaConfig& config, Rng& rng) {
  config.validate();
  if (batch.query_labels.size() != batch.query.size()) {
    throw Error(ErrorKind::DimensionMismatch, "one label per query");
  }
  EpisodeGraph g;
  g.proto = support_prototypes(p, batch.support, batch.n_way, config);
  g.xq_p = query_representations(p, batch.query, config);
  g.simcos = ad::scale(ad::cosine_matrix(g.xq_p, g.proto), 1.0 / config.metric_temperature);
  g.ce = ad::cross_entropy_rows(g.simcos, batch.query_labels);

  const auto support_prime = with_dropout(batch.support, config.dropout_rate, rng);
  const auto query_prime = with_dropout(batch.query, config.dropout_rate, rng);
  Var proto_prime = support_prototypes(p, support_prime, batch.n_way, config);
  Var xq_prime = query_representations(p, query_prime, config);
  g.ucl1 = info_nce(g.proto, proto_prime, config.ucl_temperature);
  g.ucl2 = info_nce(g.xq_p, xq_prime, config.ucl_temperature);
  g.total = ad::add(ad::add(g.ce, g.ucl1), g.ucl2);
  return g;
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

EpisodeResult forward_episode(const EpisodeBatch& batch, const PiaParams& params,
                              const PiaConfig& config, Rng& rng) {
  ad::Tape tape;
  BoundParams p = bind(tape, params, false);
  EpisodeGraph g = forward_graph(p, batch, config, rng);
  EpisodeResult r;
  r.simcos = g.simcos.value();
  r.loss.ce = g.ce.scalar();
  r.loss.ucl1 = g.ucl1.scalar();
  r.loss.ucl2 = g.ucl2.scalar();
  r.loss.total = r.loss.ce + r.loss.ucl1 + r.loss.ucl2;
  r.predictions = argmax_rows(r.simcos);
  return r;
}

// ---------------------------------------------------------------------------
// Matrix-level wrappers

Projections qkv_transform(const Matrix& x, const FiatParams& fiat, int heads) {
  if (x.cols() != fiat.w_q.cols()) throw Error(ErrorKind::DimensionMismatch, "qkv input width");
  if (heads < 1 || fiat.w_q.rows() % heads != 0) {
    throw Error(ErrorKind::InvalidArgument, "heads must divide d_h");
  }
  const Eigen::Index dh = fiat.w_q.rows() / heads;
  Matrix q = (x * fiat.w_q.transpose()).rowwise() + fiat.b_q.row(0);
  Matrix k = (x * fiat.w_k.transpose()).rowwise() + fiat.b_k.row(0);
  Matrix v = (x * fiat.w_v.transpose()).rowwise() + fiat.b_v.row(0);
  Projections out;
  for (int h = 0; h < heads; ++h) {
    out.q.push_back(q.middleCols(h * dh, dh));
    out.k.push_back(k.middleCols(h * dh, dh));
    out.v.push_back(v.middleCols(h * dh, dh));
  }
  return out;
}

Matrix scaled_attention(const Matrix& q, const Matrix& k, const Matrix& v, const RowMask& key_mask) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || key_mask.size() != k.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "attention operand shapes");
  }
  ad::Tape tape;
  Var scores = ad::scale(ad::matmul_nt(tape.constant(q), tape.constant(k)),
                         1.0 / std::sqrt(static_cast<double>(q.cols())));
  return ad::matmul(ad::softmax_rows(scores, &key_mask), tape.constant(v)).value();
}

Matrix fiat_sentence_attention(std::span<const SequenceEmbedding> support, int n_way,
                               const PiaParams& params, const PiaConfig& config) {
  ad::Tape tape;
  return support_branches(bind(tape, params, false), support, n_way, config).i_sent.value();
}

Matrix fiat_class_attention(std::span<const SequenceEmbedding> support, int n_way,
                            const PiaParams& params, const PiaConfig& config) {
  ad::Tape tape;
  return support_branches(bind(tape, params, false), support, n_way, config).i_cla.value();
}

Matrix fuse_proto1(const Matrix& i_sent, const Matrix& i_cla) {
  ad::Tape tape;
  return ad::harmonic(tape.constant(i_sent), tape.constant(i_cla)).value();
}

Matrix query_attention(std::span<const SequenceEmbedding> queries, const PiaParams& params,
                       const PiaConfig& config) {
  ad::Tape tape;
  return query_sentence(bind(tape, params, false), queries, config).value();
}

Matrix pi_layer(const Matrix& proto1, int n_way, const PiLayerParams& pi) {
  ad::Tape tape;
  return pi_graph(tape.constant(proto1), n_way, tape.constant(pi.w_pi), tape.constant(pi.b_pi))
      .value();
}

std::pair<Matrix, Matrix> ad_layer(const Matrix& proto2, const Matrix& xq_sent,
                                   const AdLayerParams& adp) {
  if (proto2.cols() != xq_sent.cols()) throw Error(ErrorKind::DimensionMismatch, "AD inputs");
  ad::Tape tape;
  Var w1 = tape.constant(adp.w1), b1 = tape.constant(adp.b1);
  Var w2 = tape.constant(adp.w2), b2 = tape.constant(adp.b2);
  return {ad_graph(tape.constant(proto2), w1, b1, w2, b2).value(),
          ad_graph(tape.constant(xq_sent), w1, b1, w2, b2).value()};
}

double ucl_loss(const Matrix& reps, const Matrix& reps_prime, double tau) {
  return info_nce(reps, reps_prime, tau);
}

Matrix metric_scores(const Matrix& xq_p, const Matrix& proto, double t) {
  if (!(t > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be positive");
  if (xq_p.cols() != proto.cols()) throw Error(ErrorKind::DimensionMismatch, "metric_scores");
  ad::Tape tape;
  return ad::scale(ad::cosine_matrix(tape.constant(xq_p), tape.constant(proto)), 1.0 / t).value();
}

double ce_loss(const Matrix& simcos, const std::vector<int>& true_class) {
  ad::Tape tape;
  return ad::cross_entropy_rows(tape.constant(simcos), true_class).scalar();
}

}  // namespace fewshot::pia
