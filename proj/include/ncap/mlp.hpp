// SPDX-License-Identifier: Apache-2.0
//
// Bias-free multilayer perceptron: ReLU hidden layers, softmax output and
// cross-entropy loss, with an explicit forward/backward trace.
//
// Layer indexing follows the usual convention: layer 0 is the input, layers
// 1..L carry weights W^(l) of shape n_l x n_{l-1}. Per-layer vectors in
// SampleTrace are indexed by that layer number.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ncap/dataset.hpp"
#include "ncap/matrix.hpp"

namespace ncap {

inline constexpr double kLogClamp = 1e-15;

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // n_0 .. n_L
  std::vector<bool> frozen;              // one flag per weight layer 1..L

  // Number of weight layers L.
  std::size_t depth() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
  std::size_t n_params() const;
  bool is_frozen(std::size_t layer) const { return frozen[layer - 1]; }
  // Throws std::invalid_argument when L < 1, a width is zero, or the frozen
  // vector has the wrong length.
  void validate() const;

  // All layers trainable.
  static MlpSpec trainable(std::vector<std::size_t> layer_sizes);
  bool operator==(const MlpSpec&) const = default;
};

struct MlpModel {
  MlpSpec spec;
  std::vector<Matrix> weights;  // weights[l - 1] holds W^(l)

  std::size_t depth() const { return spec.depth(); }
  Matrix& W(std::size_t layer) { return weights[layer - 1]; }
  const Matrix& W(std::size_t layer) const { return weights[layer - 1]; }
  void validate() const;
  bool operator==(const MlpModel&) const = default;
};

// Everything the capacitance code reads for one sample. Slot 0 of `pre`,
// `dact` and `delta` is unused; `dact` and `delta` are filled for hidden
// layers 1..L-1, and also slot L for `delta` (dC/dz^(L)).
struct SampleTrace {
  std::vector<Vector> pre;    // a^(l)
  std::vector<Vector> act;    // z^(l); act[0] is the input
  std::vector<Vector> dact;   // sigma'_l(a^(l)), binary for ReLU
  std::vector<Vector> delta;  // dC/dz^(l)
  Vector target;              // one-hot y
  Vector residual;            // z^(L) - y
  double loss = 0.0;
  bool has_backward = false;

  std::size_t depth() const { return act.empty() ? 0 : act.size() - 1; }
  const Vector& output() const { return act.back(); }
};

struct ForwardBackwardTrace {
  std::vector<SampleTrace> samples;
  std::vector<Matrix> grads;  // batch-mean gradient, grads[l - 1] for W^(l)
  double loss = 0.0;          // batch-mean loss
};

SampleTrace forward(const MlpModel& model, std::span<const double> x);
std::vector<SampleTrace> forward(const MlpModel& model, const Matrix& batch);

// C = -sum_i y_i ln max(z_i, 1e-15). Throws if y is not one-hot.
double loss_cross_entropy(std::span<const double> z_out, std::span<const double> y);

// Completes a forward trace in place: residual, delta for l = 1..L, loss.
void backward(const MlpModel& model, SampleTrace& trace, std::span<const double> y);

// Runs backward on every sample and averages the weight gradients.
ForwardBackwardTrace backward(const MlpModel& model, std::vector<SampleTrace> traces,
                              const Matrix& targets);

// Convenience: forward + backward for a batch.
ForwardBackwardTrace forward_backward(const MlpModel& model, const Matrix& inputs,
                                      const Matrix& targets);

// Per-sample weight gradients from a completed trace.
std::vector<Matrix> weight_gradients(const SampleTrace& trace);

// W <- W - alpha * grad on non-frozen layers. Throws DivergenceError on
// non-finite gradients, std::invalid_argument on alpha < 0 or shape mismatch.
void sgd_step(MlpModel& model, const std::vector<Matrix>& grads, double learning_rate);

// i.i.d. N(0, 2 / n_{l-1}) entries.
MlpModel init_kaiming_normal(const MlpSpec& spec, std::uint64_t seed);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(const MlpModel& model, const Dataset& data);
std::size_t predict_class(const MlpModel& model, std::span<const double> x);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::optional<double> beta_eff;
  bool operator==(const EpochRecord&) const = default;
};

// Per-epoch records; epoch 0 is the evaluation before any update.
class LearningCurve {
 public:
  // Throws std::invalid_argument when the epoch does not increase or an
  // accuracy leaves [0, 1].
  void append(const EpochRecord& record);
  const std::vector<EpochRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const EpochRecord& back() const { return records_.back(); }
  bool operator==(const LearningCurve&) const = default;

 private:
  std::vector<EpochRecord> records_;
};

// Called after each epoch (and once before training) with the current model;
// the returned value is stored as the record's beta_eff.
using ProbeHook = std::function<double(const MlpModel&, std::size_t epoch)>;

struct TrainOptions {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;  // shuffle order
  ProbeHook probe;
  // Stop early once the epoch's train loss drops below this value.
  std::optional<double> stop_below_loss;
};

struct TrainResult {
  MlpModel model;
  LearningCurve curve;
};

TrainResult train(MlpModel model, const Dataset& train_split, const Dataset& val_split,
                  const TrainOptions& options);

// Checkpoint JSON: {spec:{layer_sizes, frozen}, weights, seed, epoch}, numbers
// with 17 significant digits.
struct Checkpoint {
  MlpModel model;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
};
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
std::string checkpoint_json(const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(const std::string& text);

}  // namespace ncap
