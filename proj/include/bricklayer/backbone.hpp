#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bricklayer/numerics.hpp"
#include "bricklayer/types.hpp"

namespace bricklayer {

enum class Activation { Identity, Tanh };

struct BackboneArch {
  std::size_t input_dim = 128;
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t feature_dim = 16;
};

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation activation = Activation::Identity;
  std::size_t offset = 0;  // weights (out×in, row-major) then bias (out)

  std::size_t weight_count() const noexcept { return in * out; }
  std::size_t param_count() const noexcept { return in * out + out; }
  bool operator==(const LayerShape&) const = default;
};

// All parameters of the extractor in one contiguous buffer. The same type
// doubles as the gradient container.
class BackboneParams {
 public:
  BackboneParams() = default;
  explicit BackboneParams(std::vector<LayerShape> layers);

  // Glorot-uniform weights, zero bias; tanh hidden layers, linear output.
  static BackboneParams init(const BackboneArch& arch, RngStream rng);
  static BackboneParams single_linear(std::size_t in, std::size_t out);

  std::size_t layer_count() const noexcept { return layers_.size(); }
  const LayerShape& layer(std::size_t l) const { return layers_[l]; }
  const std::vector<LayerShape>& layers() const noexcept { return layers_; }

  std::span<double> weights(std::size_t l);
  std::span<const double> weights(std::size_t l) const;
  std::span<double> bias(std::size_t l);
  std::span<const double> bias(std::size_t l) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t feature_dim() const { return layers_.empty() ? 0 : layers_.back().out; }

  BackboneParams zeros_like() const;

  bool operator==(const BackboneParams&) const = default;

 private:
  std::vector<LayerShape> layers_;
  std::vector<double> values_;
};

// Immutable deep copy used as the previous-task extractor.
class FrozenBackbone {
 public:
  explicit FrozenBackbone(BackboneParams params) : params_(std::move(params)) {}
  const BackboneParams& params() const noexcept { return params_; }
  bool operator==(const FrozenBackbone&) const = default;

 private:
  BackboneParams params_;
};

FrozenBackbone snapshot(const BackboneParams& params);
FrozenBackbone snapshot(const FrozenBackbone& frozen);

struct FeatureBatch {
  Matrix features;
  std::vector<std::uint64_t> sample_ids;
  std::vector<DomainLabel> domain_labels;
};

// Activations of every layer, kept for the backward pass.
struct ForwardTrace {
  std::vector<Matrix> activations;  // activations[0] = input, back() = features

  const Matrix& features() const { return activations.back(); }
};

Matrix forward(const BackboneParams& params, const Matrix& batch);
ForwardTrace forward_trace(const BackboneParams& params, const Matrix& batch);
FeatureBatch extract(const BackboneParams& params, const std::vector<Sample>& samples);

BackboneParams backward(const BackboneParams& params, const ForwardTrace& trace, const Matrix& upstream);
BackboneParams backward(const BackboneParams& params, const Matrix& batch, const Matrix& upstream);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  bool operator==(const AdamState&) const = default;
};

// In-place Adam with bias correction. Lazily sizes the moment buffers.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

}  // namespace bricklayer
