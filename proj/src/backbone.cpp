#include "bricklayer/backbone.hpp"

#include <cmath>

namespace bricklayer {

Matrix stack_inputs(const std::vector<Sample>& samples) {
  if (samples.empty()) return {};
  Matrix x(samples.size(), samples.front().values.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].values.size() != x.cols()) fail(ErrorCode::ShapeMismatch, "samples differ in width");
    std::copy(samples[i].values.begin(), samples[i].values.end(), x.row(i).begin());
  }
  return x;
}

Matrix stack_inputs(const std::vector<const Sample*>& samples) {
  if (samples.empty()) return {};
  Matrix x(samples.size(), samples.front()->values.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i]->values.size() != x.cols()) fail(ErrorCode::ShapeMismatch, "samples differ in width");
    std::copy(samples[i]->values.begin(), samples[i]->values.end(), x.row(i).begin());
  }
  return x;
}

BackboneParams::BackboneParams(std::vector<LayerShape> layers) : layers_(std::move(layers)) {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (l > 0 && layers_[l].in != layers_[l - 1].out) {
      fail(ErrorCode::ShapeMismatch, "layer " + std::to_string(l) + " does not compose with its predecessor");
    }
    layers_[l].offset = offset;
    offset += layers_[l].param_count();
  }
  values_.assign(offset, 0.0);
}

BackboneParams BackboneParams::init(const BackboneArch& arch, RngStream rng) {
  std::vector<LayerShape> layers;
  std::size_t in = arch.input_dim;
  for (std::size_t width : arch.hidden) {
    layers.push_back({in, width, Activation::Tanh, 0});
    in = width;
  }
  layers.push_back({in, arch.feature_dim, Activation::Identity, 0});
  BackboneParams p(std::move(layers));
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    const auto& shape = p.layer(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(shape.in + shape.out));
    for (double& w : p.weights(l)) w = rng.uniform(-limit, limit);
  }
  return p;
}

BackboneParams BackboneParams::single_linear(std::size_t in, std::size_t out) {
  return BackboneParams({{in, out, Activation::Identity, 0}});
}

std::span<double> BackboneParams::weights(std::size_t l) {
  return {values_.data() + layers_[l].offset, layers_[l].weight_count()};
}
std::span<const double> BackboneParams::weights(std::size_t l) const {
  return {values_.data() + layers_[l].offset, layers_[l].weight_count()};
}
std::span<double> BackboneParams::bias(std::size_t l) {
  return {values_.data() + layers_[l].offset + layers_[l].weight_count(), layers_[l].out};
}
std::span<const double> BackboneParams::bias(std::size_t l) const {
  return {values_.data() + layers_[l].offset + layers_[l].weight_count(), layers_[l].out};
}

BackboneParams BackboneParams::zeros_like() const { return BackboneParams(layers_); }

FrozenBackbone snapshot(const BackboneParams& params) { return FrozenBackbone(params); }
FrozenBackbone snapshot(const FrozenBackbone& frozen) { return FrozenBackbone(frozen.params()); }

namespace {

Matrix affine(const BackboneParams& p, std::size_t l, const Matrix& in) {
  const auto& shape = p.layer(l);
  const auto w = p.weights(l);
  const auto b = p.bias(l);
  Matrix out(in.rows(), shape.out);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto x = in.row(r);
    auto y = out.row(r);
    for (std::size_t o = 0; o < shape.out; ++o) {
      const double* wr = w.data() + o * shape.in;
      double s = b[o];
      for (std::size_t i = 0; i < shape.in; ++i) s += wr[i] * x[i];
      y[o] = s;
    }
  }
  if (shape.activation == Activation::Tanh) {
    for (double& v : out.values()) v = std::tanh(v);
  }
  return out;
}

}  // namespace

ForwardTrace forward_trace(const BackboneParams& params, const Matrix& batch) {
  if (params.layer_count() == 0) fail(ErrorCode::ShapeMismatch, "backbone has no layers");
  if (batch.cols() != params.input_dim()) {
    fail(ErrorCode::ShapeMismatch, "batch width " + std::to_string(batch.cols()) + " != input_dim " +
                                       std::to_string(params.input_dim()));
  }
  ForwardTrace trace;
  trace.activations.reserve(params.layer_count() + 1);
  trace.activations.push_back(batch);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    trace.activations.push_back(affine(params, l, trace.activations.back()));
  }
  return trace;
}

Matrix forward(const BackboneParams& params, const Matrix& batch) {
  if (batch.cols() != params.input_dim()) {
    fail(ErrorCode::ShapeMismatch, "batch width " + std::to_string(batch.cols()) + " != input_dim " +
                                       std::to_string(params.input_dim()));
  }
  Matrix a = batch;
  for (std::size_t l = 0; l < params.layer_count(); ++l) a = affine(params, l, a);
  return a;
}

FeatureBatch extract(const BackboneParams& params, const std::vector<Sample>& samples) {
  FeatureBatch fb;
  fb.features = samples.empty() ? Matrix(0, params.feature_dim()) : forward(params, stack_inputs(samples));
  fb.sample_ids.reserve(samples.size());
  fb.domain_labels.reserve(samples.size());
  for (const auto& s : samples) {
    fb.sample_ids.push_back(s.id);
    fb.domain_labels.push_back(s.domain());
  }
  return fb;
}

BackboneParams backward(const BackboneParams& params, const ForwardTrace& trace, const Matrix& upstream) {
  const std::size_t n = trace.activations.front().rows();
  if (trace.activations.size() != params.layer_count() + 1 || upstream.rows() != n ||
      upstream.cols() != params.feature_dim()) {
    fail(ErrorCode::ShapeMismatch, "upstream gradient does not match the forward pass");
  }
  BackboneParams grads = params.zeros_like();
  Matrix delta = upstream;  // dL/d(layer output, post-activation)
  for (std::size_t l = params.layer_count(); l-- > 0;) {
    const auto& shape = params.layer(l);
    const Matrix& out = trace.activations[l + 1];
    const Matrix& in = trace.activations[l];
    if (shape.activation == Activation::Tanh) {
      for (std::size_t k = 0; k < delta.values().size(); ++k) {
        const double y = out.values()[k];
        delta.values()[k] *= 1.0 - y * y;
      }
    }
    auto gw = grads.weights(l);
    auto gb = grads.bias(l);
    for (std::size_t r = 0; r < n; ++r) {
      const auto d = delta.row(r);
      const auto x = in.row(r);
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        gb[o] += dv;
        double* gwr = gw.data() + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) gwr[i] += dv * x[i];
      }
    }
    if (l == 0) break;
    Matrix prev(n, shape.in);
    const auto w = params.weights(l);
    for (std::size_t r = 0; r < n; ++r) {
      const auto d = delta.row(r);
      auto p = prev.row(r);
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        const double* wr = w.data() + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) p[i] += dv * wr[i];
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

BackboneParams backward(const BackboneParams& params, const Matrix& batch, const Matrix& upstream) {
  return backward(params, forward_trace(params, batch), upstream);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) fail(ErrorCode::ShapeMismatch, "adam: gradient size mismatch");
  if (!all_finite(grads)) fail(ErrorCode::NonFiniteGradient, "adam received a non-finite gradient");
  if (!(lr > 0.0)) fail(ErrorCode::InvalidSpec, "adam learning rate must be positive");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) fail(ErrorCode::ShapeMismatch, "adam: state size mismatch");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace bricklayer
