// SPDX-License-Identifier: Apache-2.0

#include "ncap/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "ncap/errors.hpp"

namespace ncap {

std::size_t MlpSpec::n_params() const {
  std::size_t n = 0;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) n += layer_sizes[l] * layer_sizes[l - 1];
  return n;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need at least one weight layer");
  for (std::size_t n : layer_sizes) {
    if (n == 0) throw std::invalid_argument("MlpSpec: layer widths must be positive");
  }
  if (frozen.size() != depth()) {
    throw std::invalid_argument("MlpSpec: frozen flags must have one entry per weight layer");
  }
}

MlpSpec MlpSpec::trainable(std::vector<std::size_t> layer_sizes) {
  MlpSpec spec;
  spec.frozen.assign(layer_sizes.empty() ? 0 : layer_sizes.size() - 1, false);
  spec.layer_sizes = std::move(layer_sizes);
  return spec;
}

void MlpModel::validate() const {
  spec.validate();
  if (weights.size() != depth()) throw std::invalid_argument("MlpModel: wrong number of weight layers");
  for (std::size_t l = 1; l <= depth(); ++l) {
    const Matrix& w = W(l);
    if (w.rows() != spec.layer_sizes[l] || w.cols() != spec.layer_sizes[l - 1]) {
      throw std::invalid_argument("MlpModel: W^(" + std::to_string(l) + ") has shape " +
                                  std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                                  ", expected " + std::to_string(spec.layer_sizes[l]) + "x" +
                                  std::to_string(spec.layer_sizes[l - 1]));
    }
  }
}

namespace {

void mat_vec(const Matrix& w, std::span<const double> x, Vector& out) {
  out.assign(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) out[r] = dot(w.row(r), x);
}

// out = W^T v
void mat_t_vec(const Matrix& w, std::span<const double> v, Vector& out) {
  out.assign(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double s = v[r];
    if (s == 0.0) continue;
    const auto row = w.row(r);
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += s * row[c];
  }
}

void softmax_inplace(Vector& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (double& x : v) x /= s;
}

void check_one_hot(std::span<const double> y) {
  int ones = 0;
  for (double v : y) {
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw std::invalid_argument("target is not one-hot");
    }
  }
  if (ones != 1) throw std::invalid_argument("target is not one-hot");
}

// grad += scale * u v^T
void add_outer(Matrix& grad, std::span<const double> u, std::span<const double> v, double scale) {
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    const double s = scale * u[r];
    if (s == 0.0) continue;
    auto row = grad.row(r);
    for (std::size_t c = 0; c < grad.cols(); ++c) row[c] += s * v[c];
  }
}

void accumulate_sample_gradients(const SampleTrace& t, std::vector<Matrix>& grads, double scale) {
  const std::size_t L = t.depth();
  add_outer(grads[L - 1], t.residual, t.act[L - 1], scale);
  Vector local;
  for (std::size_t l = 1; l < L; ++l) {
    local.resize(t.delta[l].size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = t.delta[l][i] * t.dact[l][i];
    add_outer(grads[l - 1], local, t.act[l - 1], scale);
  }
}

std::vector<Matrix> zero_grads(const MlpModel& model) {
  std::vector<Matrix> grads;
  grads.reserve(model.depth());
  for (const Matrix& w : model.weights) grads.emplace_back(w.rows(), w.cols(), 0.0);
  return grads;
}

}  // namespace

SampleTrace forward(const MlpModel& model, std::span<const double> x) {
  const std::size_t L = model.depth();
  if (x.size() != model.spec.layer_sizes[0]) {
    throw std::invalid_argument("forward: input has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(model.spec.layer_sizes[0]));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("forward: non-finite input");
  }
  SampleTrace t;
  t.pre.resize(L + 1);
  t.act.resize(L + 1);
  t.dact.resize(L + 1);
  t.delta.resize(L + 1);
  t.act[0].assign(x.begin(), x.end());
  for (std::size_t l = 1; l <= L; ++l) {
    mat_vec(model.W(l), t.act[l - 1], t.pre[l]);
    if (l < L) {
      const Vector& a = t.pre[l];
      Vector& z = t.act[l];
      Vector& d = t.dact[l];
      z.resize(a.size());
      d.resize(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        // sigma'(0) is taken as 0.
        d[i] = a[i] > 0.0 ? 1.0 : 0.0;
        z[i] = a[i] > 0.0 ? a[i] : 0.0;
      }
    } else {
      t.act[l] = t.pre[l];
      softmax_inplace(t.act[l]);
    }
  }
  return t;
}

std::vector<SampleTrace> forward(const MlpModel& model, const Matrix& batch) {
  std::vector<SampleTrace> out;
  out.reserve(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) out.push_back(forward(model, batch.row(r)));
  return out;
}

double loss_cross_entropy(std::span<const double> z_out, std::span<const double> y) {
  if (z_out.size() != y.size()) throw std::invalid_argument("loss: size mismatch");
  check_one_hot(y);
  double c = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0.0) c -= y[i] * std::log(std::max(z_out[i], kLogClamp));
  }
  return c;
}

void backward(const MlpModel& model, SampleTrace& t, std::span<const double> y) {
  const std::size_t L = model.depth();
  if (t.depth() != L || t.act[L].empty()) throw std::invalid_argument("backward: missing forward trace");
  if (y.size() != model.spec.layer_sizes[L]) throw std::invalid_argument("backward: target shape mismatch");
  t.loss = loss_cross_entropy(t.act[L], y);
  t.target.assign(y.begin(), y.end());
  const Vector& z = t.act[L];
  t.residual.resize(z.size());
  t.delta[L].resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    t.residual[i] = z[i] - y[i];
    t.delta[L][i] = -y[i] / std::max(z[i], kLogClamp);
  }
  if (L >= 2) mat_t_vec(model.W(L), t.residual, t.delta[L - 1]);
  Vector local;
  for (std::size_t l = L - 1; l >= 2; --l) {
    // delta^(l-1) = W^(l)^T (delta^(l) .* sigma'_l)
    local.resize(t.delta[l].size());
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = t.delta[l][i] * t.dact[l][i];
    mat_t_vec(model.W(l), local, t.delta[l - 1]);
  }
  t.has_backward = true;
}

ForwardBackwardTrace backward(const MlpModel& model, std::vector<SampleTrace> traces,
                              const Matrix& targets) {
  if (traces.size() != targets.rows()) throw std::invalid_argument("backward: batch size mismatch");
  if (traces.empty()) throw std::invalid_argument("backward: empty batch");
  ForwardBackwardTrace out;
  out.grads = zero_grads(model);
  const double scale = 1.0 / static_cast<double>(traces.size());
  for (std::size_t s = 0; s < traces.size(); ++s) {
    backward(model, traces[s], targets.row(s));
    accumulate_sample_gradients(traces[s], out.grads, scale);
    out.loss += traces[s].loss * scale;
  }
  out.samples = std::move(traces);
  return out;
}

ForwardBackwardTrace forward_backward(const MlpModel& model, const Matrix& inputs,
                                      const Matrix& targets) {
  return backward(model, forward(model, inputs), targets);
}

std::vector<Matrix> weight_gradients(const SampleTrace& trace) {
  if (!trace.has_backward) throw std::invalid_argument("weight_gradients: trace has no backward pass");
  const std::size_t L = trace.depth();
  std::vector<Matrix> grads;
  grads.reserve(L);
  for (std::size_t l = 1; l <= L; ++l) grads.emplace_back(trace.act[l].size(), trace.act[l - 1].size());
  accumulate_sample_gradients(trace, grads, 1.0);
  return grads;
}

void sgd_step(MlpModel& model, const std::vector<Matrix>& grads, double learning_rate) {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("sgd_step: learning rate must be >= 0");
  if (grads.size() != model.depth()) throw std::invalid_argument("sgd_step: gradient count mismatch");
  for (std::size_t l = 1; l <= model.depth(); ++l) {
    const Matrix& g = grads[l - 1];
    if (g.rows() != model.W(l).rows() || g.cols() != model.W(l).cols()) {
      throw std::invalid_argument("sgd_step: gradient shape mismatch");
    }
    for (double v : g.data()) {
      if (!std::isfinite(v)) throw DivergenceError("sgd_step: non-finite gradient");
    }
  }
  for (std::size_t l = 1; l <= model.depth(); ++l) {
    if (model.spec.is_frozen(l)) continue;
    auto& w = model.W(l).data();
    const auto& g = grads[l - 1].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
  }
}

MlpModel init_kaiming_normal(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  MlpModel model;
  model.spec = spec;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 1; l <= spec.depth(); ++l) {
    const std::size_t fan_in = spec.layer_sizes[l - 1];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    Matrix w(spec.layer_sizes[l], fan_in);
    for (double& v : w.data()) v = normal(rng);
    model.weights.push_back(std::move(w));
  }
  return model;
}

std::size_t predict_class(const MlpModel& model, std::span<const double> x) {
  const SampleTrace t = forward(model, x);
  const Vector& z = t.output();
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

Evaluation evaluate(const MlpModel& model, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  Evaluation e;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const SampleTrace t = forward(model, data.features.row(r));
    const Vector& z = t.output();
    const auto label = static_cast<std::size_t>(data.labels[r]);
    e.loss -= std::log(std::max(z[label], kLogClamp));
    const auto arg = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (arg == label) ++correct;
  }
  e.loss /= static_cast<double>(data.size());
  e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return e;
}

void LearningCurve::append(const EpochRecord& record) {
  if (!records_.empty() && record.epoch <= records_.back().epoch) {
    throw std::invalid_argument("LearningCurve: epochs must strictly increase");
  }
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(record.train_accuracy) || !in_unit(record.val_accuracy)) {
    throw std::invalid_argument("LearningCurve: accuracy outside [0, 1]");
  }
  records_.push_back(record);
}

TrainResult train(MlpModel model, const Dataset& train_split, const Dataset& val_split,
                  const TrainOptions& options) {
  model.validate();
  if (train_split.size() == 0 || val_split.size() == 0) throw std::invalid_argument("train: empty split");
  if (options.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (!(options.learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");

  TrainResult result;
  auto record_epoch = [&](std::size_t epoch) {
    const Evaluation tr = evaluate(model, train_split);
    if (!std::isfinite(tr.loss)) throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = tr.loss;
    rec.train_accuracy = tr.accuracy;
    rec.val_accuracy = evaluate(model, val_split).accuracy;
    if (options.probe) rec.beta_eff = options.probe(model, epoch);
    result.curve.append(rec);
    return tr.loss;
  };

  record_epoch(0);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> grads = zero_grads(model);

  const std::size_t L = model.depth();
  const std::size_t n_out = model.spec.layer_sizes[L];
  Vector y(n_out);
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t stop = std::min(order.size(), start + options.batch_size);
      for (Matrix& g : grads) std::fill(g.data().begin(), g.data().end(), 0.0);
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t s = start; s < stop; ++s) {
        const std::size_t row = order[s];
        SampleTrace t = forward(model, train_split.features.row(row));
        std::fill(y.begin(), y.end(), 0.0);
        y[static_cast<std::size_t>(train_split.labels[row])] = 1.0;
        backward(model, t, y);
        accumulate_sample_gradients(t, grads, scale);
      }
      sgd_step(model, grads, options.learning_rate);
    }
    const double loss = record_epoch(epoch);
    if (options.stop_below_loss && loss < *options.stop_below_loss) break;
  }
  result.model = std::move(model);
  return result;
}

std::string checkpoint_json(const Checkpoint& checkpoint) {
  const MlpModel& m = checkpoint.model;
  std::ostringstream os;
  os << std::setprecision(17);
  os << "{\"spec\":{\"layer_sizes\":[";
  for (std::size_t i = 0; i < m.spec.layer_sizes.size(); ++i) {
    os << (i ? "," : "") << m.spec.layer_sizes[i];
  }
  os << "],\"frozen\":[";
  for (std::size_t i = 0; i < m.spec.frozen.size(); ++i) {
    os << (i ? "," : "") << (m.spec.frozen[i] ? "true" : "false");
  }
  os << "]},\"weights\":[";
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const Matrix& w = m.weights[l];
    os << (l ? "," : "") << "[";
    for (std::size_t r = 0; r < w.rows(); ++r) {
      os << (r ? "," : "") << "[";
      for (std::size_t c = 0; c < w.cols(); ++c) os << (c ? "," : "") << w(r, c);
      os << "]";
    }
    os << "]";
  }
  os << "],\"seed\":" << checkpoint.seed << ",\"epoch\":" << checkpoint.epoch << "}\n";
  return os.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_json(checkpoint);
}

Checkpoint parse_checkpoint(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  try {
    Checkpoint c;
    c.model.spec.layer_sizes = j.at("spec").at("layer_sizes").get<std::vector<std::size_t>>();
    c.model.spec.frozen = j.at("spec").at("frozen").get<std::vector<bool>>();
    for (const auto& layer : j.at("weights")) {
      const std::size_t rows = layer.size();
      const std::size_t cols = rows ? layer[0].size() : 0;
      Matrix w(rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        if (layer[r].size() != cols) throw DataError("checkpoint: ragged weight matrix");
        for (std::size_t col = 0; col < cols; ++col) w(r, col) = layer[r][col].get<double>();
      }
      c.model.weights.push_back(std::move(w));
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<std::size_t>();
    c.model.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace ncap
