#pragma once

// Dense ReLU value network with exact backpropagation of the semi-gradient TD loss.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "extmem/errors.hpp"
#include "extmem/rng.hpp"

namespace extmem {

struct NetSpec {
  int input_dim = 576;
  int hidden_layers = 2;
  int hidden_units = 4;
  int output_dim = 4;

  /// input*h + h + (L-1)*(h*h + h) + h*out + out
  std::size_t parameter_count() const {
    const auto in = static_cast<std::size_t>(input_dim);
    const auto h = static_cast<std::size_t>(hidden_units);
    const auto out = static_cast<std::size_t>(output_dim);
    const auto l = static_cast<std::size_t>(hidden_layers);
    return in * h + h + (l - 1) * (h * h + h) + h * out + out;
  }

  std::string label() const { return std::to_string(hidden_layers) + "x" + std::to_string(hidden_units); }

  void validate() const {
    if (input_dim < 1 || output_dim < 1) throw config_error("network dimensions must be positive");
    if (hidden_layers < 1) throw config_error("network needs at least one hidden layer");
    if (hidden_units < 1) throw config_error("hidden_units must be positive");
  }

  bool operator==(const NetSpec&) const = default;
};

/// Affine layer; weights are out x in, row-major.
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  double& w(int o, int i) { return weights[static_cast<std::size_t>(o * in + i)]; }
  double w(int o, int i) const { return weights[static_cast<std::size_t>(o * in + i)]; }
  bool operator==(const Layer&) const = default;
};

struct NetParams {
  NetSpec spec;
  std::vector<Layer> layers;

  static NetParams zeros(const NetSpec& spec) {
    spec.validate();
    NetParams p;
    p.spec = spec;
    int in = spec.input_dim;
    for (int l = 0; l <= spec.hidden_layers; ++l) {
      const int out = l == spec.hidden_layers ? spec.output_dim : spec.hidden_units;
      p.layers.push_back(Layer{in, out, std::vector<double>(static_cast<std::size_t>(in * out), 0.0),
                               std::vector<double>(static_cast<std::size_t>(out), 0.0)});
      in = out;
    }
    return p;
  }

  /// Uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static NetParams glorot(const NetSpec& spec, RngStream& rng) {
    NetParams p = zeros(spec);
    for (auto& layer : p.layers) {
      const double limit = std::sqrt(6.0 / (layer.in + layer.out));
      for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
    }
    return p;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// Visits every scalar in storage order: per layer, weights then biases.
  template <class F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      for (auto& w : l.weights) f(w);
      for (auto& b : l.bias) f(b);
    }
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& l : layers) {
      for (double w : l.weights) f(w);
      for (double b : l.bias) f(b);
    }
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(size());
    for_each([&](double v) { flat.push_back(v); });
    return flat;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](double v) { ok = ok && std::isfinite(v); });
    return ok;
  }

  bool operator==(const NetParams&) const = default;
};

namespace detail {

inline void affine(const Layer& layer, std::span<const double> x, std::vector<double>& y) {
  y.assign(layer.bias.begin(), layer.bias.end());
  for (int i = 0; i < layer.in; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    if (xi == 0.0) continue;  // observations are sparse binary images
    for (int o = 0; o < layer.out; ++o) y[static_cast<std::size_t>(o)] += layer.w(o, i) * xi;
  }
}

}  // namespace detail

/// Activations kept for backpropagation: inputs[l] is the input to layer l.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;
  std::vector<double> output;
};

inline void forward_cached(const NetParams& params, std::span<const double> x, ForwardCache& cache) {
  expects(x.size() == static_cast<std::size_t>(params.spec.input_dim), "network input dimension mismatch");
  const std::size_t n = params.layers.size();
  cache.inputs.resize(n);
  cache.inputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < n; ++l) {
    std::vector<double>& y = l + 1 < n ? cache.inputs[l + 1] : cache.output;
    detail::affine(params.layers[l], cache.inputs[l], y);
    if (l + 1 < n)
      for (auto& v : y) v = v > 0.0 ? v : 0.0;
  }
}

/// Affine -> ReLU over the hidden layers, final affine layer without nonlinearity.
inline std::vector<double> forward(const NetParams& params, std::span<const double> x) {
  ForwardCache cache;
  forward_cached(params, x, cache);
  return std::move(cache.output);
}

/// Minimal view of a transition for loss computations.
struct TransitionRef {
  std::span<const double> obs;
  int action = 0;
  double reward = 0.0;
  std::span<const double> next_obs;
  bool done = false;
};

struct LossAndGrad {
  double loss = 0.0;
  NetParams grad;
};

/// Bootstrapped target r + gamma * max_a' q(o', a'; target) * (1 - done).
inline double td_target(const NetParams& target_params, const TransitionRef& t, double gamma) {
  if (t.done) return t.reward;
  const auto q_next = forward(target_params, t.next_obs);
  return t.reward + gamma * *std::max_element(q_next.begin(), q_next.end());
}

/// L = 1/2 * sum (target - q(o, a; params))^2 over the batch, with the target held
/// fixed (semi-gradient: nothing flows into target_params).
inline LossAndGrad td_loss_and_grad(const NetParams& params, const NetParams& target_params,
                                    std::span<const TransitionRef> batch, double gamma) {
  expects(gamma >= 0.0 && gamma < 1.0, "discount must lie in [0, 1)");
  expects(!batch.empty(), "empty batch");
  expects(params.spec == target_params.spec, "online/target shape mismatch");

  LossAndGrad out{0.0, NetParams::zeros(params.spec)};
  ForwardCache cache;
  std::vector<double> delta;
  std::vector<double> delta_prev;
  const std::size_t n_layers = params.layers.size();

  for (const auto& t : batch) {
    expects(t.action >= 0 && t.action < params.spec.output_dim, "action index out of range");
    const double y = td_target(target_params, t, gamma);
    forward_cached(params, t.obs, cache);
    const double err = y - cache.output[static_cast<std::size_t>(t.action)];
    out.loss += 0.5 * err * err;

    // dL/d(output) is nonzero only at the taken action.
    delta.assign(static_cast<std::size_t>(params.spec.output_dim), 0.0);
    delta[static_cast<std::size_t>(t.action)] = -err;

    for (std::size_t l = n_layers; l-- > 0;) {
      const Layer& layer = params.layers[l];
      Layer& g = out.grad.layers[l];
      const auto& x = cache.inputs[l];
      for (int o = 0; o < layer.out; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        if (d == 0.0) continue;
        g.bias[static_cast<std::size_t>(o)] += d;
        for (int i = 0; i < layer.in; ++i) g.w(o, i) += d * x[static_cast<std::size_t>(i)];
      }
      if (l == 0) break;
      // Backpropagate through the ReLU feeding this layer.
      delta_prev.assign(static_cast<std::size_t>(layer.in), 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        if (d == 0.0) continue;
        for (int i = 0; i < layer.in; ++i) delta_prev[static_cast<std::size_t>(i)] += d * layer.w(o, i);
      }
      for (int i = 0; i < layer.in; ++i)
        if (x[static_cast<std::size_t>(i)] <= 0.0) delta_prev[static_cast<std::size_t>(i)] = 0.0;
      delta.swap(delta_prev);
    }
  }
  return out;
}

/// params <- params - step_size * gradient
inline void sgd_apply(NetParams& params, const NetParams& gradient, double step_size) {
  expects(step_size > 0.0, "step size must be positive");
  expects(params.spec == gradient.spec, "gradient shape mismatch");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& p = params.layers[l];
    const auto& g = gradient.layers[l];
    for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] -= step_size * g.weights[i];
    for (std::size_t i = 0; i < p.bias.size(); ++i) p.bias[i] -= step_size * g.bias[i];
  }
}

// ---------------------------------------------------------------------------
// Binary format: four little-endian int32 (input_dim, hidden_layers, hidden_units,
// output_dim) followed by the parameters as little-endian IEEE doubles in for_each order.

namespace detail {

inline void put_le(std::ostream& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xff));
}

inline std::uint64_t get_le(std::istream& in, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw config_error("truncated parameter file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return v;
}

inline void put_double(std::ostream& out, double d) { put_le(out, std::bit_cast<std::uint64_t>(d), 8); }
inline double get_double(std::istream& in) { return std::bit_cast<double>(get_le(in, 8)); }

}  // namespace detail

inline void save_net(std::ostream& out, const NetParams& params) {
  const auto& s = params.spec;
  for (int v : {s.input_dim, s.hidden_layers, s.hidden_units, s.output_dim})
    detail::put_le(out, static_cast<std::uint32_t>(v), 4);
  params.for_each([&](double v) { detail::put_double(out, v); });
}

inline NetParams load_net(std::istream& in) {
  NetSpec s;
  s.input_dim = static_cast<int>(detail::get_le(in, 4));
  s.hidden_layers = static_cast<int>(detail::get_le(in, 4));
  s.hidden_units = static_cast<int>(detail::get_le(in, 4));
  s.output_dim = static_cast<int>(detail::get_le(in, 4));
  s.validate();
  NetParams p = NetParams::zeros(s);
  p.for_each([&](double& v) { v = detail::get_double(in); });
  return p;
}

}  // namespace extmem
