#pragma once

// Undercomplete sequence-to-sequence LSTM autoencoder.
//
// Encoder: two stacked LSTM layers (d -> h1 -> h2) over the observed
// timesteps; the final layer-2 hidden state is the latent vector z (one AECS
// row per series). Past a series' length the encoder state is carried
// unchanged, so padding never reaches z.
//
// Decoder: layer 1 (h2 -> h1) starts from hidden state P z + p with a zero
// cell and reads z at every step; layer 2 (h1 -> h2) starts from zero state.
// An affine output map (h2 -> d) produces each reconstructed timestep.
//
// Loss is the squared error over observed (series, timestep, dimension)
// entries divided by their count. Gradients come from full BPTT.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hcaecs/dataset.hpp"
#include "hcaecs/detail/text.hpp"
#include "hcaecs/error.hpp"

namespace hcaecs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct ModelDims {
  std::size_t input = 1;   // d
  std::size_t hidden1 = 16;
  std::size_t hidden2 = 12;
  std::size_t max_length = 0;

  bool operator==(const ModelDims&) const = default;
};

// Offsets of one parameter tensor inside the flat parameter vector.
struct ParamBlock {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

// Gate rows are stacked input, forget, candidate, output.
struct LstmBlocks {
  ParamBlock w;  // 4h x in
  ParamBlock u;  // 4h x h
  ParamBlock b;  // 4h x 1
  Eigen::Index hidden = 0;
};

struct ParamLayout {
  LstmBlocks encoder1, encoder2, decoder1, decoder2;
  ParamBlock bridge_w, bridge_b;  // latent -> decoder layer-1 initial hidden
  ParamBlock output_w, output_b;  // decoder top layer -> d
  Eigen::Index total = 0;

  explicit ParamLayout(const ModelDims& dims) {
    const auto d = static_cast<Eigen::Index>(dims.input);
    const auto h1 = static_cast<Eigen::Index>(dims.hidden1);
    const auto h2 = static_cast<Eigen::Index>(dims.hidden2);
    auto block = [this](Eigen::Index rows, Eigen::Index cols) {
      ParamBlock b{total, rows, cols};
      total += rows * cols;
      return b;
    };
    auto lstm = [&](Eigen::Index in, Eigen::Index h) {
      LstmBlocks l;
      l.w = block(4 * h, in);
      l.u = block(4 * h, h);
      l.b = block(4 * h, 1);
      l.hidden = h;
      return l;
    };
    encoder1 = lstm(d, h1);
    encoder2 = lstm(h1, h2);
    bridge_w = block(h1, h2);
    bridge_b = block(h1, 1);
    decoder1 = lstm(h2, h1);
    decoder2 = lstm(h1, h2);
    output_w = block(d, h2);
    output_b = block(d, 1);
  }
};

class AutoencoderModel {
public:
  AutoencoderModel(ModelDims dims, std::uint64_t seed, Vector params)
      : dims_(dims), seed_(seed), layout_(dims), params_(std::move(params)) {
    if (params_.size() != layout_.total)
      throw ShapeError("parameter vector has " + std::to_string(params_.size()) + " entries, expected " +
                       std::to_string(layout_.total));
  }

  const ModelDims& dims() const { return dims_; }
  std::uint64_t seed() const { return seed_; }
  const ParamLayout& layout() const { return layout_; }
  const Vector& parameters() const { return params_; }
  Vector& parameters() { return params_; }

  Eigen::Map<const Matrix> view(const ParamBlock& b) const {
    return Eigen::Map<const Matrix>(params_.data() + b.offset, b.rows, b.cols);
  }

  std::string fingerprint() const {
    detail::Fnv1a h;
    h.update_value(dims_.input);
    h.update_value(dims_.hidden1);
    h.update_value(dims_.hidden2);
    h.update_value(dims_.max_length);
    h.update_value(seed_);
    h.update(params_.data(), static_cast<std::size_t>(params_.size()) * sizeof(double));
    return h.hex();
  }

private:
  ModelDims dims_;
  std::uint64_t seed_;
  ParamLayout layout_;
  Vector params_;
};

inline void validate_dims(const ModelDims& dims) {
  if (dims.input < 1 || dims.hidden1 < 1 || dims.hidden2 < 1 || dims.max_length < 1)
    throw ConfigError("all model dimensions must be >= 1");
  if (!(dims.hidden2 < dims.hidden1 && dims.hidden1 < dims.max_length))
    throw ConfigError("undercomplete ordering h2 < h1 < n_max violated (h1=" + std::to_string(dims.hidden1) +
                      ", h2=" + std::to_string(dims.hidden2) + ", n_max=" + std::to_string(dims.max_length) + ")");
}

// Glorot-uniform weights per tensor, zero biases except forget gates at 1.
inline AutoencoderModel init_model(const ModelDims& dims, std::uint64_t seed) {
  validate_dims(dims);
  const ParamLayout layout(dims);
  Vector params = Vector::Zero(layout.total);
  std::mt19937_64 rng(seed);
  auto fill = [&](const ParamBlock& b, double fan_in, double fan_out) {
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-s, s);
    for (Eigen::Index k = 0; k < b.size(); ++k) params[b.offset + k] = dist(rng);
  };
  auto fill_lstm = [&](const LstmBlocks& l) {
    fill(l.w, static_cast<double>(l.w.cols), static_cast<double>(l.w.rows));
    fill(l.u, static_cast<double>(l.u.cols), static_cast<double>(l.u.rows));
    params.segment(l.b.offset + l.hidden, l.hidden).setOnes();
  };
  fill_lstm(layout.encoder1);
  fill_lstm(layout.encoder2);
  fill(layout.bridge_w, static_cast<double>(layout.bridge_w.cols), static_cast<double>(layout.bridge_w.rows));
  fill_lstm(layout.decoder1);
  fill_lstm(layout.decoder2);
  fill(layout.output_w, static_cast<double>(layout.output_w.cols), static_cast<double>(layout.output_w.rows));
  return AutoencoderModel(dims, seed, std::move(params));
}

inline AutoencoderModel init_model(std::size_t d, std::size_t h1, std::size_t h2, std::size_t n_max,
                                   std::uint64_t seed) {
  return init_model(ModelDims{d, h1, h2, n_max}, seed);
}

// ---------------------------------------------------------------------------
// Batches

// Column b of every per-timestep matrix belongs to series indices[b].
struct Batch {
  std::vector<Matrix> inputs;     // n_max entries of d x B
  std::vector<RowVector> masks;   // n_max entries of 1 x B, 1 where observed
  double observed = 0.0;          // observed (timestep, dimension) entries
  std::size_t size() const { return inputs.empty() ? 0 : static_cast<std::size_t>(inputs.front().cols()); }
};

inline Batch make_batch(const TimeSeriesDataset& ds, std::span<const std::size_t> indices) {
  const std::size_t n = ds.max_length();
  const auto d = static_cast<Eigen::Index>(ds.dims());
  const auto b = static_cast<Eigen::Index>(indices.size());
  Batch batch;
  batch.inputs.assign(n, Matrix::Zero(d, b));
  batch.masks.assign(n, RowVector::Zero(b));
  for (Eigen::Index col = 0; col < b; ++col) {
    const std::size_t i = indices[static_cast<std::size_t>(col)];
    if (i >= ds.size()) throw ShapeError("series index out of range");
    for (std::size_t t = 0; t < ds.length(i); ++t) {
      for (Eigen::Index k = 0; k < d; ++k)
        batch.inputs[t](k, col) = ds.value(i, t, static_cast<std::size_t>(k));
      batch.masks[t][col] = 1.0;
    }
    batch.observed += static_cast<double>(ds.length(i) * ds.dims());
  }
  return batch;
}

namespace detail {

inline Matrix sigmoid(const Matrix& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

struct LstmParams {
  Eigen::Map<const Matrix> w, u, b;
  Eigen::Index hidden;

  LstmParams(const Vector& params, const LstmBlocks& l)
      : w(params.data() + l.w.offset, l.w.rows, l.w.cols),
        u(params.data() + l.u.offset, l.u.rows, l.u.cols),
        b(params.data() + l.b.offset, l.b.rows, 1),
        hidden(l.hidden) {}
};

struct LstmGrads {
  Eigen::Map<Matrix> w, u, b;

  LstmGrads(Vector& grad, const LstmBlocks& l)
      : w(grad.data() + l.w.offset, l.w.rows, l.w.cols),
        u(grad.data() + l.u.offset, l.u.rows, l.u.cols),
        b(grad.data() + l.b.offset, l.b.rows, 1) {}
};

struct LstmStep {
  Matrix gates;   // activated i, f, g, o stacked (4h x B)
  Matrix c_prev;
  Matrix h_prev;
  Matrix c_new;
  Matrix tanh_c;
};

struct LstmTrace {
  std::vector<Matrix> outputs;  // h_t, n entries
  Matrix final_c;
  std::vector<LstmStep> steps;
};

// Columns whose mask entry is 0 keep their previous state.
inline LstmTrace lstm_forward(const LstmParams& p, const std::vector<Matrix>& inputs, Matrix h, Matrix c,
                              const std::vector<RowVector>* masks, bool keep_steps) {
  const Eigen::Index hd = p.hidden;
  LstmTrace trace;
  trace.outputs.reserve(inputs.size());
  if (keep_steps) trace.steps.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Matrix a = p.w * inputs[t] + p.u * h;
    a.colwise() += p.b.col(0);
    Matrix gates(a.rows(), a.cols());
    gates.topRows(2 * hd) = sigmoid(a.topRows(2 * hd));
    gates.middleRows(2 * hd, hd) = a.middleRows(2 * hd, hd).array().tanh().matrix();
    gates.bottomRows(hd) = sigmoid(a.bottomRows(hd));
    Matrix c_new = (gates.middleRows(hd, hd).array() * c.array() +
                    gates.topRows(hd).array() * gates.middleRows(2 * hd, hd).array())
                       .matrix();
    Matrix tanh_c = c_new.array().tanh().matrix();
    Matrix h_new = (gates.bottomRows(hd).array() * tanh_c.array()).matrix();
    Matrix c_out = c_new;
    if (masks) {
      const RowVector& m = (*masks)[t];
      for (Eigen::Index col = 0; col < m.size(); ++col)
        if (m[col] == 0.0) {
          h_new.col(col) = h.col(col);
          c_out.col(col) = c.col(col);
        }
    }
    if (keep_steps) trace.steps.push_back({std::move(gates), c, h, std::move(c_new), std::move(tanh_c)});
    h = std::move(h_new);
    c = std::move(c_out);
    trace.outputs.push_back(h);
  }
  trace.final_c = std::move(c);
  return trace;
}

struct LstmBackward {
  std::vector<Matrix> d_inputs;
  Matrix d_h0;
  Matrix d_c0;
};

// d_outputs[t] is the loss gradient on h_t from outside the layer.
inline LstmBackward lstm_backward(const LstmParams& p, LstmGrads& g, const std::vector<Matrix>& inputs,
                                  const LstmTrace& trace, const std::vector<Matrix>& d_outputs,
                                  const std::vector<RowVector>* masks) {
  const Eigen::Index hd = p.hidden;
  const auto n = inputs.size();
  const Eigen::Index cols = trace.outputs.front().cols();
  LstmBackward out;
  out.d_inputs.resize(n);
  Matrix dh_next = Matrix::Zero(hd, cols);
  Matrix dc_next = Matrix::Zero(hd, cols);
  for (std::size_t t = n; t-- > 0;) {
    const LstmStep& s = trace.steps[t];
    Matrix dh = d_outputs[t] + dh_next;
    Matrix dc = dc_next;
    Matrix carry_h = Matrix::Zero(hd, cols);
    Matrix carry_c = Matrix::Zero(hd, cols);
    if (masks) {
      const RowVector& m = (*masks)[t];
      for (Eigen::Index col = 0; col < cols; ++col)
        if (m[col] == 0.0) {
          carry_h.col(col) = dh.col(col);
          carry_c.col(col) = dc.col(col);
          dh.col(col).setZero();
          dc.col(col).setZero();
        }
    }
    const auto i = s.gates.topRows(hd).array();
    const auto f = s.gates.middleRows(hd, hd).array();
    const auto gg = s.gates.middleRows(2 * hd, hd).array();
    const auto o = s.gates.bottomRows(hd).array();
    const auto tc = s.tanh_c.array();

    dc.array() += dh.array() * o * (1.0 - tc * tc);
    Matrix da(4 * hd, cols);
    da.topRows(hd) = (dc.array() * gg * i * (1.0 - i)).matrix();
    da.middleRows(hd, hd) = (dc.array() * s.c_prev.array() * f * (1.0 - f)).matrix();
    da.middleRows(2 * hd, hd) = (dc.array() * i * (1.0 - gg * gg)).matrix();
    da.bottomRows(hd) = (dh.array() * tc * o * (1.0 - o)).matrix();

    g.w.noalias() += da * inputs[t].transpose();
    g.u.noalias() += da * s.h_prev.transpose();
    g.b.col(0) += da.rowwise().sum();
    out.d_inputs[t] = p.w.transpose() * da;
    dh_next = p.u.transpose() * da + carry_h;
    dc_next = (dc.array() * f).matrix() + carry_c;
  }
  out.d_h0 = std::move(dh_next);
  out.d_c0 = std::move(dc_next);
  return out;
}

}  // namespace detail

struct ForwardResult {
  std::vector<Matrix> reconstruction;  // n_max entries of d x B
  Matrix latent;                       // h2 x B
};

inline void check_batch(const AutoencoderModel& model, const Batch& batch) {
  if (batch.inputs.size() != model.dims().max_length)
    throw ShapeError("batch has " + std::to_string(batch.inputs.size()) + " timesteps, model expects " +
                     std::to_string(model.dims().max_length));
  if (batch.inputs.empty() || batch.inputs.front().rows() != static_cast<Eigen::Index>(model.dims().input))
    throw ShapeError("batch dimension does not match model input dimension");
}

namespace detail {

struct NetworkTrace {
  LstmTrace enc1, enc2, dec1, dec2;
  Matrix latent;
  std::vector<Matrix> dec1_inputs;
  std::vector<Matrix> outputs;
};

inline NetworkTrace network_forward(const AutoencoderModel& model, const Batch& batch, bool keep_steps,
                                    bool decode = true) {
  const auto& L = model.layout();
  const Vector& params = model.parameters();
  const Eigen::Index cols = static_cast<Eigen::Index>(batch.size());
  const LstmParams enc1(params, L.encoder1), enc2(params, L.encoder2);
  NetworkTrace tr;
  tr.enc1 = lstm_forward(enc1, batch.inputs, Matrix::Zero(enc1.hidden, cols), Matrix::Zero(enc1.hidden, cols),
                         &batch.masks, keep_steps);
  tr.enc2 = lstm_forward(enc2, tr.enc1.outputs, Matrix::Zero(enc2.hidden, cols), Matrix::Zero(enc2.hidden, cols),
                         &batch.masks, keep_steps);
  tr.latent = tr.enc2.outputs.back();
  if (!decode) return tr;

  const LstmParams dec1(params, L.decoder1), dec2(params, L.decoder2);
  Matrix h0 = model.view(L.bridge_w) * tr.latent;
  h0.colwise() += model.view(L.bridge_b).col(0);
  tr.dec1_inputs.assign(batch.inputs.size(), tr.latent);
  tr.dec1 = lstm_forward(dec1, tr.dec1_inputs, std::move(h0), Matrix::Zero(dec1.hidden, cols), nullptr, keep_steps);
  tr.dec2 = lstm_forward(dec2, tr.dec1.outputs, Matrix::Zero(dec2.hidden, cols), Matrix::Zero(dec2.hidden, cols),
                         nullptr, keep_steps);
  const auto out_w = model.view(L.output_w);
  const auto out_b = model.view(L.output_b);
  tr.outputs.reserve(batch.inputs.size());
  for (const auto& h : tr.dec2.outputs) {
    Matrix y = out_w * h;
    y.colwise() += out_b.col(0);
    tr.outputs.push_back(std::move(y));
  }
  return tr;
}

inline double masked_squared_error(const std::vector<Matrix>& outputs, const Batch& batch) {
  double sum = 0.0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    const Matrix diff = outputs[t] - batch.inputs[t];
    for (Eigen::Index col = 0; col < diff.cols(); ++col)
      if (batch.masks[t][col] != 0.0) sum += diff.col(col).squaredNorm();
  }
  return sum;
}

}  // namespace detail

inline ForwardResult forward(const AutoencoderModel& model, const Batch& batch) {
  check_batch(model, batch);
  auto tr = detail::network_forward(model, batch, false);
  return {std::move(tr.outputs), std::move(tr.latent)};
}

/// Masked MSE of the batch; fills `grad` (same layout as the parameters) when given.
inline double loss_and_gradient(const AutoencoderModel& model, const Batch& batch, Vector* grad) {
  check_batch(model, batch);
  if (batch.observed <= 0.0) throw ShapeError("batch has no observed entries");
  const auto tr = detail::network_forward(model, batch, grad != nullptr);
  const double loss = detail::masked_squared_error(tr.outputs, batch) / batch.observed;
  if (!grad) return loss;

  const auto& L = model.layout();
  const Vector& params = model.parameters();
  grad->setZero(L.total);
  const auto n = batch.inputs.size();
  const Eigen::Index cols = static_cast<Eigen::Index>(batch.size());

  // Output layer.
  const auto out_w = model.view(L.output_w);
  Eigen::Map<Matrix> g_out_w(grad->data() + L.output_w.offset, L.output_w.rows, L.output_w.cols);
  Eigen::Map<Matrix> g_out_b(grad->data() + L.output_b.offset, L.output_b.rows, 1);
  std::vector<Matrix> d_dec2(n);
  for (std::size_t t = 0; t < n; ++t) {
    Matrix dy = (2.0 / batch.observed) * (tr.outputs[t] - batch.inputs[t]);
    for (Eigen::Index col = 0; col < cols; ++col)
      if (batch.masks[t][col] == 0.0) dy.col(col).setZero();
    g_out_w.noalias() += dy * tr.dec2.outputs[t].transpose();
    g_out_b.col(0) += dy.rowwise().sum();
    d_dec2[t] = out_w.transpose() * dy;
  }

  const detail::LstmParams dec1(params, L.decoder1), dec2(params, L.decoder2);
  const detail::LstmParams enc1(params, L.encoder1), enc2(params, L.encoder2);
  detail::LstmGrads g_dec1(*grad, L.decoder1), g_dec2(*grad, L.decoder2);
  detail::LstmGrads g_enc1(*grad, L.encoder1), g_enc2(*grad, L.encoder2);

  auto b_dec2 = detail::lstm_backward(dec2, g_dec2, tr.dec1.outputs, tr.dec2, d_dec2, nullptr);
  auto b_dec1 = detail::lstm_backward(dec1, g_dec1, tr.dec1_inputs, tr.dec1, b_dec2.d_inputs, nullptr);

  Matrix d_latent = Matrix::Zero(enc2.hidden, cols);
  for (const auto& d : b_dec1.d_inputs) d_latent += d;
  Eigen::Map<Matrix> g_bridge_w(grad->data() + L.bridge_w.offset, L.bridge_w.rows, L.bridge_w.cols);
  Eigen::Map<Matrix> g_bridge_b(grad->data() + L.bridge_b.offset, L.bridge_b.rows, 1);
  g_bridge_w.noalias() += b_dec1.d_h0 * tr.latent.transpose();
  g_bridge_b.col(0) += b_dec1.d_h0.rowwise().sum();
  d_latent.noalias() += model.view(L.bridge_w).transpose() * b_dec1.d_h0;

  std::vector<Matrix> d_enc2(n, Matrix::Zero(enc2.hidden, cols));
  d_enc2.back() = d_latent;
  auto b_enc2 = detail::lstm_backward(enc2, g_enc2, tr.enc1.outputs, tr.enc2, d_enc2, &batch.masks);
  detail::lstm_backward(enc1, g_enc1, batch.inputs, tr.enc1, b_enc2.d_inputs, &batch.masks);
  return loss;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.004;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> clip_norm;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (clip_norm && !(*clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  }
};

struct TrainTrace {
  std::vector<double> loss;     // per epoch, observed-entry weighted over batches
  std::vector<double> seconds;  // wall time per epoch
};

struct TrainResult {
  AutoencoderModel model;
  TrainTrace trace;
};

// Minibatch SGD with momentum: v <- momentum * v - lr * g; theta <- theta + v.
// Batch order is reshuffled every epoch from a generator seeded by cfg.seed.
inline TrainResult train(AutoencoderModel model, const TimeSeriesDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.size() == 0) throw ShapeError("cannot train on an empty dataset");
  if (ds.dims() != model.dims().input || ds.max_length() != model.dims().max_length)
    throw ShapeError("dataset shape (n=" + std::to_string(ds.max_length()) + ", d=" + std::to_string(ds.dims()) +
                     ") does not match the model");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  Vector velocity = Vector::Zero(model.parameters().size());
  Vector grad;
  TrainTrace trace;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double sq_sum = 0.0;
    double observed = 0.0;
    for (std::size_t first = 0, batch_no = 0; first < order.size(); first += cfg.batch_size, ++batch_no) {
      const std::size_t last = std::min(order.size(), first + cfg.batch_size);
      const Batch batch = make_batch(ds, std::span<const std::size_t>(order.data() + first, last - first));
      const double loss = loss_and_gradient(model, batch, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw NumericError("non-finite loss or gradient at epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_no + 1));
      if (cfg.clip_norm) {
        const double norm = grad.norm();
        if (norm > *cfg.clip_norm) grad *= *cfg.clip_norm / norm;
      }
      velocity = cfg.momentum * velocity - cfg.learning_rate * grad;
      model.parameters() += velocity;
      if (!model.parameters().allFinite())
        throw NumericError("non-finite parameters after epoch " + std::to_string(epoch + 1) + ", batch " +
                           std::to_string(batch_no + 1));
      sq_sum += loss * batch.observed;
      observed += batch.observed;
    }
    trace.loss.push_back(sq_sum / observed);
    trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return {std::move(model), std::move(trace)};
}

// ---------------------------------------------------------------------------
// Latent extraction

struct LatentMatrix {
  Matrix values;  // M x h2
  std::string source_model_fingerprint;
};

// Encoder only, one series at a time so a row never depends on its batch mates.
inline LatentMatrix extract_aecs(const AutoencoderModel& model, const TimeSeriesDataset& ds) {
  if (ds.dims() != model.dims().input || ds.max_length() != model.dims().max_length)
    throw ShapeError("dataset shape (n=" + std::to_string(ds.max_length()) + ", d=" + std::to_string(ds.dims()) +
                     ") does not match the model");
  LatentMatrix out;
  out.values.resize(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(model.dims().hidden2));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t idx[] = {i};
    const Batch batch = make_batch(ds, idx);
    const auto tr = detail::network_forward(model, batch, false, false);
    out.values.row(static_cast<Eigen::Index>(i)) = tr.latent.col(0).transpose();
  }
  if (!out.values.allFinite()) throw NumericError("latent representation has non-finite entries");
  out.source_model_fingerprint = model.fingerprint();
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

// Text checkpoint; parameters are written as hex floats so a reload is exact.
inline void write_checkpoint(const AutoencoderModel& model, std::ostream& out) {
  const auto& d = model.dims();
  out << "hcaecs-model 1\n";
  out << "dims " << d.input << ' ' << d.hidden1 << ' ' << d.hidden2 << ' ' << d.max_length << '\n';
  out << "seed " << model.seed() << '\n';
  out << "params " << model.parameters().size() << '\n';
  char buf[64];
  for (Eigen::Index k = 0; k < model.parameters().size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%a\n", model.parameters()[k]);
    out << buf;
  }
}

inline AutoencoderModel read_checkpoint(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "hcaecs-model" || version != 1)
    throw ParseError("not an hcaecs model checkpoint (version 1)", 1);
  ModelDims dims;
  std::uint64_t seed = 0;
  long long count = 0;
  if (!(in >> tag >> dims.input >> dims.hidden1 >> dims.hidden2 >> dims.max_length) || tag != "dims")
    throw ParseError("expected dims line", 2);
  if (!(in >> tag >> seed) || tag != "seed") throw ParseError("expected seed line", 3);
  if (!(in >> tag >> count) || tag != "params" || count < 0) throw ParseError("expected params line", 4);
  validate_dims(dims);
  Vector params(count);
  std::string cell;
  for (long long k = 0; k < count; ++k) {
    if (!(in >> cell)) throw ParseError("truncated parameter list", static_cast<std::size_t>(5 + k));
    char* end = nullptr;
    params[k] = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() + cell.size()) throw ParseError("bad parameter value", static_cast<std::size_t>(5 + k));
  }
  return AutoencoderModel(dims, seed, std::move(params));
}

inline void save_checkpoint(const AutoencoderModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ShapeError("cannot write " + path.string());
  write_checkpoint(model, out);
}

inline AutoencoderModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ShapeError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

// Header `series_id,z0,...,z{h2-1}`; shortest round-trip decimals.
inline void write_latent_csv(const Matrix& values, std::ostream& out) {
  out << "series_id";
  for (Eigen::Index c = 0; c < values.cols(); ++c) out << ",z" << c;
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << detail::format_double(values(r, c));
    out << '\n';
  }
}

inline Matrix read_latent_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, ',');
    if (width == 0) {
      if (cells.size() < 2 || cells[0] != "series_id") throw ParseError("expected series_id,z0,... header", line_no);
      width = cells.size() - 1;
      continue;
    }
    if (cells.size() != width + 1)
      throw ParseError("expected " + std::to_string(width + 1) + " columns, got " + std::to_string(cells.size()),
                       line_no);
    auto id = detail::parse_int(cells[0]);
    if (!id || static_cast<std::size_t>(*id) != rows.size()) throw ParseError("series ids must run 0..M-1", line_no);
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      auto v = detail::parse_double(cells[c]);
      if (!v || !std::isfinite(*v)) throw ParseError("non-numeric value '" + std::string(cells[c]) + "'", line_no);
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ShapeError("latent file has no rows");
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return out;
}

}  // namespace hcaecs
