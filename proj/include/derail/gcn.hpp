#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "derail/graph.hpp"
#include "derail/label.hpp"
#include "derail/matrix.hpp"

namespace derail {

inline constexpr std::size_t kDefaultHiddenWidth = 32;

/// Two GCN layers (d -> h -> h, ReLU), mean-pool readout and a 2-way linear
/// head. Class index 1 is "defective".
struct GcnParams {
  Matrix w1;     // d x h
  Matrix w2;     // h x h
  Matrix w_out;  // h x 2
  Matrix b_out;  // 1 x 2

  static GcnParams zeros(std::size_t dim, std::size_t hidden);
  /// Glorot-uniform weights, zero bias.
  static GcnParams glorot(std::size_t dim, std::size_t hidden, std::uint64_t seed);

  std::size_t dim() const { return w1.rows(); }
  std::size_t hidden() const { return w1.cols(); }
  std::array<Matrix*, 4> tensors() { return {&w1, &w2, &w_out, &b_out}; }
  std::array<const Matrix*, 4> tensors() const { return {&w1, &w2, &w_out, &b_out}; }
  double squared_norm() const;
  bool operator==(const GcnParams&) const = default;
};

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  std::uint64_t seed = 42;
  std::size_t hidden = kDefaultHiddenWidth;
  double l2_penalty = 5e-4;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double train_fraction = 0.9;

  /// Throws Error(BadFormat) when a field is out of range.
  void validate() const;
};

struct ForwardTrace {
  Matrix sx;  // Ŝ·X
  Matrix z1;  // pre-activation of layer 1
  Matrix h1;
  Matrix sh1;  // Ŝ·H1
  Matrix z2;
  Matrix h2;
  std::vector<double> pooled;
  std::array<double, 2> logits{};
  double probability = 0.5;  // softmax(logits)[defective]
};

/// σ(Ŝ · H · W), σ = ReLU when `apply_activation`.
Matrix gcn_layer(const Matrix& s_hat, const Matrix& h, const Matrix& w, bool apply_activation);

ForwardTrace forward(const GcnParams& params, const NormalizedGraph& graph);

struct LossAndGrads {
  double loss = 0.0;
  GcnParams grads;
};

/// Softmax cross-entropy plus l2_penalty·‖θ‖²/2 over every parameter,
/// differentiated by hand through the exact forward computation.
LossAndGrads loss_and_grads(const GcnParams& params, const NormalizedGraph& graph, Label label,
                            double l2_penalty);

struct OptimizerState {
  GcnParams m;  // Adam first moment
  GcnParams v;  // Adam second moment
  std::uint64_t step = 0;

  static OptimizerState for_params(const GcnParams& params);
};

void optimizer_step(OptimizerState& state, GcnParams& params, const GcnParams& grads,
                    const TrainConfig& config);

/// Trained parameters plus what is needed to pair them with a vocabulary.
struct GcnModel {
  GcnParams params;
  std::string vocab_fingerprint;

  /// FNV-1a of the serialized container, 16 hex digits.
  std::string fingerprint() const;
};

// "SGM1" container; layout documented in docs/formats.md.
void write_model(std::ostream& out, const GcnModel& model);
GcnModel read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const GcnModel& model);
GcnModel load_model(const std::filesystem::path& path);
Json to_json(const GcnModel& model);

}  // namespace derail
