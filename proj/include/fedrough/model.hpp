#pragma once

// Small differentiable classifiers with hand-written backpropagation.
//
// Parameter layout (flat, layer-major): for each layer l with shape (in, out)
//   weights  in*out values, row-major in (in x out) order: W[i][o] at i*out + o
//   bias     out values
// Layers follow each other in order. ReLU sits between consecutive layers; the
// last layer emits logits. A last layer of width 1 is a binary logistic
// output (sigmoid + log-loss); otherwise a softmax cross-entropy over
// num_classes logits.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fedrough/errors.hpp"
#include "fedrough/param_vector.hpp"
#include "fedrough/rng.hpp"

namespace fedrough {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct Batch {
  Matrix features;          // n x p
  std::vector<int> labels;  // n entries in [0, num_classes)

  std::size_t size() const noexcept { return labels.size(); }
};

enum class ModelKind { logistic_regression, mlp };

inline const char* to_string(ModelKind k) {
  return k == ModelKind::logistic_regression ? "logistic_regression" : "mlp";
}

struct LayerShape {
  std::size_t in;
  std::size_t out;
  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

class LossModel {
 public:
  /// Binary logistic regression when num_classes == 2, multinomial otherwise.
  static LossModel logistic_regression(std::size_t input_dim, std::size_t num_classes) {
    require(input_dim >= 1 && num_classes >= 2, "logistic_regression: need input_dim >= 1 and num_classes >= 2");
    return LossModel(ModelKind::logistic_regression, {{input_dim, num_classes == 2 ? 1 : num_classes}}, num_classes);
  }

  static LossModel mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t num_classes) {
    require(input_dim >= 1 && num_classes >= 2, "mlp: need input_dim >= 1 and num_classes >= 2");
    require(!hidden.empty(), "mlp: at least one hidden layer");
    std::vector<LayerShape> shapes;
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
      require(h >= 1, "mlp: hidden widths must be positive");
      shapes.push_back({prev, h});
      prev = h;
    }
    shapes.push_back({prev, num_classes});
    return LossModel(ModelKind::mlp, std::move(shapes), num_classes);
  }

  ModelKind kind() const noexcept { return kind_; }
  const std::vector<LayerShape>& layer_shapes() const noexcept { return shapes_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t input_dim() const noexcept { return shapes_.front().in; }
  std::size_t output_dim() const noexcept { return shapes_.back().out; }
  std::size_t param_dim() const noexcept { return param_dim_; }

  /// Offset of layer l's weight block; its bias follows at offset + in*out.
  std::size_t layer_offset(std::size_t l) const noexcept { return offsets_[l]; }

  /// Mean cross-entropy over the batch.
  double loss(const ParamVector& params, const Batch& batch) const {
    check(params, batch);
    Workspace ws(*this);
    double total = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      forward(params, batch.features.row(r), ws);
      total += sample_loss(ws.acts.back(), batch.labels[r]);
    }
    return total / static_cast<double>(batch.size());
  }

  /// Mean loss and its analytic gradient.
  std::pair<double, ParamVector> loss_and_gradient(const ParamVector& params, const Batch& batch) const {
    check(params, batch);
    Workspace ws(*this);
    ParamVector g(param_dim_);
    double total = 0.0;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto x = batch.features.row(r);
      forward(params, x, ws);
      const int y = batch.labels[r];
      total += sample_loss(ws.acts.back(), y);
      output_delta(ws.acts.back(), y, ws.deltas.back());
      backward(params, x, ws, g);
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (double& v : g) v *= inv_n;
    return {total * inv_n, std::move(g)};
  }

  ParamVector gradient(const ParamVector& params, const Batch& batch) const {
    return loss_and_gradient(params, batch).second;
  }

  /// Raw logits for one feature row.
  std::vector<double> logits(const ParamVector& params, std::span<const double> x) const {
    Workspace ws(*this);
    forward(params, x, ws);
    return ws.acts.back();
  }

  /// Argmax class; ties go to the smaller index. A binary output predicts
  /// class 1 only for a strictly positive logit.
  int predict(const ParamVector& params, std::span<const double> x) const {
    return predict_from_logits(logits(params, x));
  }

  static int predict_from_logits(const std::vector<double>& z) {
    if (z.size() == 1) return z[0] > 0.0 ? 1 : 0;
    std::size_t best = 0;
    for (std::size_t c = 1; c < z.size(); ++c)
      if (z[c] > z[best]) best = c;
    return static_cast<int>(best);
  }

  /// Per-sample cross-entropy computed from logits with log-sum-exp.
  static double sample_loss(const std::vector<double>& z, int y) {
    if (z.size() == 1) {
      // softplus(z) - y*z
      const double v = z[0];
      return std::max(v, 0.0) - (y == 1 ? v : 0.0) + std::log1p(std::exp(-std::abs(v)));
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - zmax);
    return zmax + std::log(s) - z[static_cast<std::size_t>(y)];
  }

  /// Initial parameters: weights ~ N(0, 1/fan_in) for MLPs, zeros for
  /// logistic regression; biases zero.
  ParamVector init_params(Rng& rng) const {
    ParamVector w(param_dim_);
    if (kind_ == ModelKind::logistic_regression) return w;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
      const auto [in, out] = shapes_[l];
      const double scale = std::sqrt(1.0 / static_cast<double>(in));
      for (std::size_t i = 0; i < in * out; ++i) w[offsets_[l] + i] = scale * rng.normal();
    }
    return w;
  }

  friend bool operator==(const LossModel& a, const LossModel& b) {
    return a.kind_ == b.kind_ && a.shapes_ == b.shapes_ && a.num_classes_ == b.num_classes_;
  }

 private:
  LossModel(ModelKind kind, std::vector<LayerShape> shapes, std::size_t num_classes)
      : kind_(kind), shapes_(std::move(shapes)), num_classes_(num_classes) {
    std::size_t off = 0;
    for (const auto& s : shapes_) {
      offsets_.push_back(off);
      off += s.in * s.out + s.out;
    }
    param_dim_ = off;
  }

  struct Workspace {
    std::vector<std::vector<double>> acts;    // post-activation output of each layer (last = logits)
    std::vector<std::vector<double>> deltas;  // dL/d(pre-activation) of each layer
    explicit Workspace(const LossModel& m) {
      for (const auto& s : m.shapes_) {
        acts.emplace_back(s.out);
        deltas.emplace_back(s.out);
      }
    }
  };

  void check(const ParamVector& params, const Batch& batch) const {
    if (params.dim() != param_dim_)
      throw ContractError("model: parameter dimension " + std::to_string(params.dim()) + " != expected " +
                          std::to_string(param_dim_));
    require(batch.size() >= 1, "model: empty batch");
    if (batch.features.cols != input_dim() || batch.features.rows != batch.size())
      throw ContractError("model: batch feature shape does not match model input width " +
                          std::to_string(input_dim()));
    for (int y : batch.labels)
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes_) throw ContractError("model: label out of range");
  }

  void forward(const ParamVector& params, std::span<const double> x, Workspace& ws) const {
    const double* w = params.span().data();
    std::span<const double> input = x;
    for (std::size_t l = 0; l < shapes_.size(); ++l) {
      const auto [in, out] = shapes_[l];
      const double* W = w + offsets_[l];
      const double* b = W + in * out;
      double* h = ws.acts[l].data();
      for (std::size_t o = 0; o < out; ++o) h[o] = b[o];
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = input[i];
        if (xi == 0.0) continue;
        const double* Wi = W + i * out;
        for (std::size_t o = 0; o < out; ++o) h[o] += xi * Wi[o];
      }
      if (l + 1 < shapes_.size())
        for (std::size_t o = 0; o < out; ++o) h[o] = h[o] > 0.0 ? h[o] : 0.0;
      input = ws.acts[l];
    }
  }

  static void output_delta(const std::vector<double>& z, int y, std::vector<double>& delta) {
    if (z.size() == 1) {
      const double p = 1.0 / (1.0 + std::exp(-z[0]));
      delta[0] = p - (y == 1 ? 1.0 : 0.0);
      return;
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      delta[c] = std::exp(z[c] - zmax);
      s += delta[c];
    }
    for (double& d : delta) d /= s;
    delta[static_cast<std::size_t>(y)] -= 1.0;
  }

  // Accumulates the per-sample gradient into g. ws.deltas.back() must hold the
  // output delta. ReLU derivative at exactly 0 is taken as 0.
  void backward(const ParamVector& params, std::span<const double> x, Workspace& ws, ParamVector& g) const {
    const double* w = params.span().data();
    double* gd = g.span().data();
    for (std::size_t l = shapes_.size(); l-- > 0;) {
      const auto [in, out] = shapes_[l];
      const double* W = w + offsets_[l];
      double* gW = gd + offsets_[l];
      double* gb = gW + in * out;
      const double* delta = ws.deltas[l].data();
      std::span<const double> input = l == 0 ? x : std::span<const double>(ws.acts[l - 1]);
      for (std::size_t o = 0; o < out; ++o) gb[o] += delta[o];
      for (std::size_t i = 0; i < in; ++i) {
        const double xi = input[i];
        if (xi == 0.0) continue;
        double* gWi = gW + i * out;
        for (std::size_t o = 0; o < out; ++o) gWi[o] += xi * delta[o];
      }
      if (l == 0) break;
      double* prev = ws.deltas[l - 1].data();
      const auto& prev_act = ws.acts[l - 1];
      for (std::size_t i = 0; i < in; ++i) {
        if (prev_act[i] <= 0.0) {
          prev[i] = 0.0;
          continue;
        }
        const double* Wi = W + i * out;
        double acc = 0.0;
        for (std::size_t o = 0; o < out; ++o) acc += Wi[o] * delta[o];
        prev[i] = acc;
      }
    }
  }

  ModelKind kind_;
  std::vector<LayerShape> shapes_;
  std::size_t num_classes_;
  std::vector<std::size_t> offsets_;
  std::size_t param_dim_ = 0;
};

inline double loss(const LossModel& model, const ParamVector& params, const Batch& batch) {
  return model.loss(params, batch);
}

inline ParamVector grad(const LossModel& model, const ParamVector& params, const Batch& batch) {
  return model.gradient(params, batch);
}

/// Central-difference gradient of an arbitrary scalar function of the parameters.
template <class F>
ParamVector fd_gradient(F&& f, const ParamVector& params, double h) {
  require(h > 0.0, "fd_gradient: step h must be positive");
  ParamVector g(params.dim());
  ParamVector probe = params;
  for (std::size_t i = 0; i < params.dim(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline ParamVector fd_gradient(const LossModel& model, const ParamVector& params, const Batch& batch, double h) {
  require(params.dim() == model.param_dim(), "fd_gradient: parameter dimension mismatch");
  return fd_gradient([&](const ParamVector& w) { return model.loss(w, batch); }, params, h);
}

}  // namespace fedrough
