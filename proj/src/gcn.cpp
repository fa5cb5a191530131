#include "derail/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "derail/error.hpp"
#include "derail/hash.hpp"

namespace derail {

namespace {

constexpr std::string_view kModelMagic = "SGM1";
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kActivationRelu = 0;
constexpr std::size_t kFingerprintBytes = 16;

void relu_inplace(Matrix& m) {
  for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
}

void fill_glorot(Matrix& m, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (double& v : m.values()) v = uniform(rng);
}

std::array<double, 2> softmax(const std::array<double, 2>& logits) {
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx);
  const double e1 = std::exp(logits[1] - mx);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace

GcnParams GcnParams::zeros(std::size_t dim, std::size_t hidden) {
  return {Matrix(dim, hidden), Matrix(hidden, hidden), Matrix(hidden, 2), Matrix(1, 2)};
}

GcnParams GcnParams::glorot(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  GcnParams p = zeros(dim, hidden);
  std::mt19937_64 rng(seed);
  fill_glorot(p.w1, rng);
  fill_glorot(p.w2, rng);
  fill_glorot(p.w_out, rng);
  return p;
}

double GcnParams::squared_norm() const {
  double acc = 0.0;
  for (const Matrix* t : tensors()) {
    for (double v : t->values()) acc += v * v;
  }
  return acc;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::BadFormat, what); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (hidden < 1) fail("hidden width must be >= 1");
  if (!(l2_penalty >= 0.0)) fail("l2_penalty must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must be in (0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
}

Matrix gcn_layer(const Matrix& s_hat, const Matrix& h, const Matrix& w, bool apply_activation) {
  if (s_hat.rows() != s_hat.cols() || s_hat.cols() != h.rows() || h.cols() != w.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "gcn_layer operands do not chain");
  }
  Matrix out = matmul(matmul(s_hat, h), w);
  if (apply_activation) relu_inplace(out);
  return out;
}

ForwardTrace forward(const GcnParams& params, const NormalizedGraph& graph) {
  const std::size_t n = graph.s_hat.rows();
  if (n == 0 || graph.s_hat.cols() != n || graph.features.rows() != n ||
      graph.features.cols() != params.dim() || params.w2.rows() != params.hidden() ||
      params.w2.cols() != params.hidden() || params.w_out.rows() != params.hidden() ||
      params.w_out.cols() != 2 || params.b_out.rows() != 1 || params.b_out.cols() != 2) {
    throw Error(ErrorCode::ShapeMismatch, "model and graph dimensions disagree");
  }
  ForwardTrace t;
  t.sx = matmul(graph.s_hat, graph.features);
  t.z1 = matmul(t.sx, params.w1);
  t.h1 = t.z1;
  relu_inplace(t.h1);
  t.sh1 = matmul(graph.s_hat, t.h1);
  t.z2 = matmul(t.sh1, params.w2);
  t.h2 = t.z2;
  relu_inplace(t.h2);

  const std::size_t h = params.hidden();
  t.pooled.assign(h, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = t.h2.row(i);
    for (std::size_t k = 0; k < h; ++k) t.pooled[k] += row[k];
  }
  for (double& v : t.pooled) v /= static_cast<double>(n);

  for (std::size_t c = 0; c < 2; ++c) {
    double acc = params.b_out(0, c);
    for (std::size_t k = 0; k < h; ++k) acc += t.pooled[k] * params.w_out(k, c);
    t.logits[c] = acc;
  }
  t.probability = softmax(t.logits)[1];
  return t;
}

LossAndGrads loss_and_grads(const GcnParams& params, const NormalizedGraph& graph, Label label,
                            double l2_penalty) {
  const ForwardTrace t = forward(params, graph);
  const std::size_t n = graph.s_hat.rows();
  const std::size_t h = params.hidden();
  const std::size_t y = label == Label::Defective ? 1 : 0;

  const double mx = std::max(t.logits[0], t.logits[1]);
  const double lse = mx + std::log(std::exp(t.logits[0] - mx) + std::exp(t.logits[1] - mx));

  LossAndGrads out;
  out.loss = lse - t.logits[y] + 0.5 * l2_penalty * params.squared_norm();
  out.grads = GcnParams::zeros(params.dim(), h);
  GcnParams& g = out.grads;

  auto p = softmax(t.logits);
  std::array<double, 2> dlogits{p[0] - (y == 0 ? 1.0 : 0.0), p[1] - (y == 1 ? 1.0 : 0.0)};
  for (std::size_t c = 0; c < 2; ++c) {
    g.b_out(0, c) = dlogits[c];
    for (std::size_t k = 0; k < h; ++k) g.w_out(k, c) = t.pooled[k] * dlogits[c];
  }

  std::vector<double> dpooled(h);
  for (std::size_t k = 0; k < h; ++k) {
    dpooled[k] = params.w_out(k, 0) * dlogits[0] + params.w_out(k, 1) * dlogits[1];
  }
  Matrix dz2(n, h);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < h; ++k) {
      if (t.z2(i, k) > 0.0) dz2(i, k) = dpooled[k] * inv_n;
    }
  }
  g.w2 = matmul_tn(t.sh1, dz2);
  Matrix dz1 = matmul_tn(graph.s_hat, matmul_nt(dz2, params.w2));
  for (std::size_t i = 0; i < dz1.size(); ++i) {
    if (!(t.z1.values()[i] > 0.0)) dz1.values()[i] = 0.0;
  }
  g.w1 = matmul_tn(t.sx, dz1);

  if (l2_penalty != 0.0) {
    auto src = params.tensors();
    auto dst = g.tensors();
    for (std::size_t k = 0; k < src.size(); ++k) {
      auto pv = src[k]->values();
      auto gv = dst[k]->values();
      for (std::size_t i = 0; i < pv.size(); ++i) gv[i] += l2_penalty * pv[i];
    }
  }
  return out;
}

OptimizerState OptimizerState::for_params(const GcnParams& params) {
  return {GcnParams::zeros(params.dim(), params.hidden()),
          GcnParams::zeros(params.dim(), params.hidden()), 0};
}

void optimizer_step(OptimizerState& state, GcnParams& params, const GcnParams& grads,
                    const TrainConfig& config) {
  auto ps = params.tensors();
  auto gs = grads.tensors();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (ps[k]->rows() != gs[k]->rows() || ps[k]->cols() != gs[k]->cols()) {
      throw Error(ErrorCode::ShapeMismatch, "gradient shape differs from parameter shape");
    }
  }
  ++state.step;
  if (config.optimizer == OptimizerKind::Sgd) {
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto pv = ps[k]->values();
      auto gv = gs[k]->values();
      for (std::size_t i = 0; i < pv.size(); ++i) pv[i] -= config.learning_rate * gv[i];
    }
    return;
  }
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  auto ms = state.m.tensors();
  auto vs = state.v.tensors();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto pv = ps[k]->values();
    auto gv = gs[k]->values();
    auto mv = ms[k]->values();
    auto vv = vs[k]->values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      mv[i] = config.beta1 * mv[i] + (1.0 - config.beta1) * gv[i];
      vv[i] = config.beta2 * vv[i] + (1.0 - config.beta2) * gv[i] * gv[i];
      const double m_hat = mv[i] / bias1;
      const double v_hat = vv[i] / bias2;
      pv[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

void write_model(std::ostream& out, const GcnModel& model) {
  const auto& p = model.params;
  if (model.vocab_fingerprint.size() != kFingerprintBytes) {
    throw Error(ErrorCode::BadFormat, "vocabulary fingerprint must be 16 hex digits");
  }
  binary::put_magic(out, kModelMagic);
  binary::put_u32(out, kModelVersion);
  binary::put_u64(out, p.dim());
  binary::put_u64(out, p.hidden());
  binary::put_u32(out, kActivationRelu);
  binary::put_u32(out, 2);  // classes
  out.write(model.vocab_fingerprint.data(), kFingerprintBytes);
  for (const Matrix* t : p.tensors()) binary::put_matrix(out, *t);
  if (!out) throw Error(ErrorCode::Io, "failed writing model container");
}

GcnModel read_model(std::istream& in) {
  binary::expect_magic(in, kModelMagic);
  if (auto v = binary::get_u32(in); v != kModelVersion) {
    throw Error(ErrorCode::BadFormat, "unsupported model version " + std::to_string(v));
  }
  const auto d = binary::checked_dim(binary::get_u64(in), 1u << 16, "embedding width");
  const auto h = binary::checked_dim(binary::get_u64(in), 1u << 16, "hidden width");
  if (binary::get_u32(in) != kActivationRelu) throw Error(ErrorCode::BadFormat, "unknown activation");
  if (binary::get_u32(in) != 2) throw Error(ErrorCode::BadFormat, "only binary heads are supported");
  GcnModel model;
  model.vocab_fingerprint.resize(kFingerprintBytes);
  if (!in.read(model.vocab_fingerprint.data(), kFingerprintBytes)) {
    throw Error(ErrorCode::BadFormat, "truncated model header");
  }
  model.params = GcnParams::zeros(d, h);
  for (Matrix* t : model.params.tensors()) *t = binary::get_matrix(in, t->rows(), t->cols());
  for (const Matrix* t : model.params.tensors()) {
    if (!all_finite(*t)) throw Error(ErrorCode::BadFormat, "non-finite model weight");
  }
  return model;
}

void save_model(const std::filesystem::path& path, const GcnModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  write_model(out, model);
}

GcnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open model " + path.string());
  return read_model(in);
}

std::string GcnModel::fingerprint() const {
  std::ostringstream buf;
  write_model(buf, *this);
  return Fnv1a().update(buf.str()).hex();
}

Json to_json(const GcnModel& model) {
  auto matrix = [](const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
  };
  Json j;
  j["format"] = "derail-model/1";
  j["dim"] = model.params.dim();
  j["hidden"] = model.params.hidden();
  j["activation"] = "relu";
  j["vocab_fingerprint"] = model.vocab_fingerprint;
  j["fingerprint"] = model.fingerprint();
  j["w1"] = matrix(model.params.w1);
  j["w2"] = matrix(model.params.w2);
  j["w_out"] = matrix(model.params.w_out);
  j["b_out"] = matrix(model.params.b_out);
  return j;
}

}  // namespace derail
