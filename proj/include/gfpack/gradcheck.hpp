#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gfpack/autodiff.hpp"
#include "gfpack/random.hpp"
#include "gfpack/scoremodel.hpp"

namespace gfpack::ad {

/// Worst relative error between analytic and central-difference gradients.
/// Per tensor: ||analytic - numeric|| / max(||analytic||, ||numeric||, floor).
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t tensors = 0;
  std::size_t entries = 0;
};

namespace detail {
inline double rel_error(const std::vector<double>& a, const std::vector<double>& n, double floor) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

inline std::vector<std::size_t> pick_entries(std::size_t size, std::size_t max_entries, Rng& rng) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (size <= max_entries) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_entries);
  std::sort(idx.begin(), idx.end());
  return idx;
}
}  // namespace detail

/// Checks d(build(inputs))/d(inputs) for a scalar-valued graph builder.
inline GradCheckReport check_inputs(std::vector<Matrix> inputs,
                                    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                                    double h = 1e-5, double floor = 1e-8) {
  auto eval = [&](const std::vector<Matrix>& xs) {
    Tape t(false);
    std::vector<Var> vs;
    for (const auto& x : xs) vs.push_back(t.constant(x));
    return build(t, vs).value().data[0];
  };
  Tape t;
  std::vector<Var> vs;
  for (const auto& x : inputs) vs.push_back(t.variable(x));
  const Var out = build(t, vs);
  t.backward(out);
  GradCheckReport r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = t.has_grad(vs[k].id) ? t.grad(vs[k].id) : Matrix(inputs[k].rows, inputs[k].cols);
    std::vector<double> num(inputs[k].size());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k].data[i];
      inputs[k].data[i] = x0 + h;
      const double fp = eval(inputs);
      inputs[k].data[i] = x0 - h;
      const double fm = eval(inputs);
      inputs[k].data[i] = x0;
      num[i] = (fp - fm) / (2 * h);
    }
    const double e = detail::rel_error(analytic.data, num, floor);
    ++r.tensors;
    r.entries += num.size();
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst = "input " + std::to_string(k);
    }
  }
  return r;
}

/// Checks the gradient of a scalar loss with respect to every trainable
/// parameter, sampling at most `max_entries` entries per tensor.
inline GradCheckReport check_params(model::ParamStore& params,
                                    const std::function<Var(model::Binding&)>& loss_fn, std::uint64_t seed,
                                    std::size_t max_entries = 16, double h = 1e-5, double floor = 1e-8) {
  Tape t;
  model::Binding b(t, params);
  const Var loss = loss_fn(b);
  t.backward(loss);
  const auto grads = b.grads();
  auto eval = [&] {
    Tape e(false);
    model::Binding eb(e, params);
    return loss_fn(eb).value().data[0];
  };
  Rng rng(seed);
  GradCheckReport r;
  for (const auto& [name, g] : grads) {
    Matrix& p = params.values.at(name);
    const auto idx = detail::pick_entries(p.size(), max_entries, rng);
    std::vector<double> a, num;
    for (std::size_t i : idx) {
      const double x0 = p.data[i];
      p.data[i] = x0 + h;
      const double fp = eval();
      p.data[i] = x0 - h;
      const double fm = eval();
      p.data[i] = x0;
      a.push_back(g.data[i]);
      num.push_back((fp - fm) / (2 * h));
    }
    const double e = detail::rel_error(a, num, floor);
    ++r.tensors;
    r.entries += idx.size();
    if (e > r.max_rel_error) {
      r.max_rel_error = e;
      r.worst = name;
    }
  }
  return r;
}

/// Replaces every trainable parameter with uniform noise in [-scale, scale]
/// (keeps LayerNorm gains near 1), so no gradient is trivially zero.
inline void randomize(model::ParamStore& params, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, m] : params.values) {
    if (params.frozen.count(name)) continue;
    const bool gain = name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    for (double& v : m.data) v = gain ? 1.0 + u(rng) : u(rng);
  }
}

}  // namespace gfpack::ad
