#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <boost/math/distributions/non_central_t.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "extmem/rng.hpp"
#include "extmem/tinynet.hpp"

namespace oracle {

using extmem::NetParams;
using extmem::NetSpec;
using extmem::RngStream;

/// Plain triple loop, no sparsity shortcut.
inline std::vector<double> forward(const NetParams& p, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    std::vector<double> z(static_cast<std::size_t>(layer.out));
    for (int o = 0; o < layer.out; ++o) {
      double s = layer.bias[static_cast<std::size_t>(o)];
      for (int i = 0; i < layer.in; ++i) s += layer.w(o, i) * a[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = l + 1 < p.layers.size() ? std::max(0.0, s) : s;
    }
    a = std::move(z);
  }
  return a;
}

struct Sample {
  std::vector<double> obs;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;
  bool done = false;
};

/// 1/2 sum (y - q(o, a))^2 with y computed from the target net.
inline double td_loss(const NetParams& p, const NetParams& target, const std::vector<Sample>& batch, double gamma) {
  double loss = 0.0;
  for (const auto& s : batch) {
    double y = s.reward;
    if (!s.done) {
      const auto qn = forward(target, s.next_obs);
      y += gamma * *std::max_element(qn.begin(), qn.end());
    }
    const double e = y - forward(p, s.obs)[static_cast<std::size_t>(s.action)];
    loss += 0.5 * e * e;
  }
  return loss;
}

inline std::vector<extmem::TransitionRef> refs(const std::vector<Sample>& batch) {
  std::vector<extmem::TransitionRef> out;
  for (const auto& s : batch) out.push_back({s.obs, s.action, s.reward, s.next_obs, s.done});
  return out;
}

/// Random batch of sparse binary-ish inputs with a few real-valued entries.
inline std::vector<Sample> random_batch(const NetSpec& spec, std::size_t n, RngStream& rng) {
  std::vector<Sample> batch(n);
  auto draw = [&] {
    std::vector<double> x(static_cast<std::size_t>(spec.input_dim));
    for (auto& v : x) {
      const double u = rng.uniform();
      v = u < 0.5 ? 0.0 : (u < 0.8 ? 1.0 : rng.uniform(-1.0, 1.0));
    }
    return x;
  };
  for (auto& s : batch) {
    s.obs = draw();
    s.next_obs = draw();
    s.action = static_cast<int>(rng.index(static_cast<std::size_t>(spec.output_dim)));
    s.reward = rng.bernoulli(0.3) ? 1.0 : 0.0;
    s.done = rng.bernoulli(0.2);
  }
  return batch;
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over every
/// parameter, with central differences at step h.
inline double max_gradient_error(const NetParams& params, const NetParams& target, const std::vector<Sample>& batch,
                                 double gamma, double h = 1e-5, double floor = 1e-6) {
  const auto analytic = extmem::td_loss_and_grad(params, target, refs(batch), gamma).grad.flatten();
  NetParams probe = params;
  std::vector<double*> slots;
  probe.for_each([&](double& v) { slots.push_back(&v); });
  double worst = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const double saved = *slots[k];
    *slots[k] = saved + h;
    const double up = td_loss(probe, target, batch, gamma);
    *slots[k] = saved - h;
    const double down = td_loss(probe, target, batch, gamma);
    *slots[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

/// One draw of the randomized gradient check over {2,3} x {4,8,16,32}.
inline double gradient_check_draw(RngStream& rng) {
  static constexpr int kLayers[] = {2, 3};
  static constexpr int kUnits[] = {4, 8, 16, 32};
  static constexpr int kInputs[] = {8, 16, 36};
  NetSpec spec;
  spec.hidden_layers = kLayers[rng.index(2)];
  spec.hidden_units = kUnits[rng.index(4)];
  spec.input_dim = kInputs[rng.index(3)];
  spec.output_dim = 4;
  const NetParams params = [&] {
    NetParams p = NetParams::glorot(spec, rng);
    p.for_each([&](double& v) { v += rng.uniform(-0.05, 0.05); });  // nonzero biases too
    return p;
  }();
  const NetParams target = NetParams::glorot(spec, rng);
  const auto batch = random_batch(spec, 1 + rng.index(4), rng);
  const double gamma = rng.uniform(0.0, 0.99);
  return max_gradient_error(params, target, batch, gamma);
}

/// I(X;Y) in bits by a direct double loop over a dense joint table.
inline double mutual_information(const std::vector<std::vector<double>>& joint) {
  std::vector<double> px(joint.size(), 0.0);
  std::vector<double> py(joint.empty() ? 0 : joint[0].size(), 0.0);
  for (std::size_t i = 0; i < joint.size(); ++i)
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      px[i] += joint[i][j];
      py[j] += joint[i][j];
    }
  double mi = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i)
    for (std::size_t j = 0; j < joint[i].size(); ++j)
      if (joint[i][j] > 0.0) mi += joint[i][j] * std::log2(joint[i][j] / (px[i] * py[j]));
  return mi;
}

/// Power of the one-sided Welch test at level a for equal variances and sizes,
/// using the noncentral t distribution.
inline double welch_power(double effect, double sigma, int n, double a) {
  const double se = sigma * std::sqrt(2.0 / n);
  const double df = 2.0 * (n - 1);  // Welch-Satterthwaite for equal variances and sizes
  const double crit = boost::math::quantile(boost::math::complement(boost::math::students_t(df), a));
  const boost::math::non_central_t nct(df, effect / se);
  return boost::math::cdf(boost::math::complement(nct, crit));
}

}  // namespace oracle
