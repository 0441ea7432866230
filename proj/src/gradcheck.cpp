#include "mmnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mmnet/ops.hpp"

namespace mmnet {
namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  const int n = shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

// Values bounded away from zero, for kinked ops (relu) where finite
// differences straddling the kink are meaningless.
Tensor random_tensor_offzero(Shape shape, Rng& rng, double min_abs = 0.25) {
  const int n = shape_numel(shape);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) {
    const double mag = rng.uniform(min_abs, 1.5);
    x = rng.bernoulli(0.5) ? mag : -mag;
  }
  return Tensor::from_vector(std::move(shape), std::move(v), true);
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max(1.0, std::abs(a) + std::abs(n));
}

}  // namespace

double gradcheck_all_elements(
    const std::function<Tensor(const std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& inputs, Rng& rng, double eps,
    double grad_scale) {
  Tensor out = fn(inputs);
  std::vector<double> weights(static_cast<std::size_t>(out.numel()));
  for (double& w : weights) {
    const double mag = rng.uniform(0.5, 1.5);
    w = rng.bernoulli(0.5) ? mag : -mag;
  }
  const Tensor wt = Tensor::from_vector(out.shape(), weights);

  auto loss_value = [&](const std::vector<Tensor>& in) {
    NoGradGuard ng;
    Tensor o = fn(in);
    const double* po = o.data().data();
    double acc = 0.0;
    for (int i = 0; i < o.numel(); ++i) acc += po[i] * weights[i];
    return acc;
  };

  Tensor loss = sum(mul(fn(inputs), wt));
  loss.backward();

  double worst = 0.0;
  for (Tensor input : inputs) {
    if (!input.requires_grad()) continue;
    auto g = input.grad();
    auto vals = input.mutable_data();
    for (int i = 0; i < input.numel(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double lp = loss_value(inputs);
      vals[i] = orig - eps;
      const double lm = loss_value(inputs);
      vals[i] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = g[i] * grad_scale;
      worst = std::max(worst, rel_err(analytic, numeric));
    }
  }
  return worst;
}

double gradcheck_probes(const std::function<Tensor()>& loss_fn,
                        const std::vector<GradProbe>& probes, double eps) {
  for (const GradProbe& p : probes) {
    Tensor t = p.param;
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  loss.backward();
  std::vector<double> analytic;
  for (const GradProbe& p : probes) {
    auto g = p.param.grad();
    analytic.push_back(g.empty() ? 0.0 : g[p.index]);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    Tensor t = probes[i].param;
    auto vals = t.mutable_data();
    const double orig = vals[probes[i].index];
    double lp, lm;
    {
      NoGradGuard ng;
      vals[probes[i].index] = orig + eps;
      lp = loss_fn().item();
      vals[probes[i].index] = orig - eps;
      lm = loss_fn().item();
      vals[probes[i].index] = orig;
    }
    const double numeric = (lp - lm) / (2.0 * eps);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  return worst;
}

std::vector<OpCheckResult> run_op_gradchecks(std::uint64_t seed, int instances,
                                             bool corrupt) {
  struct Entry {
    const char* name;
    std::function<double(Rng&)> one_instance;
  };

  auto elementwise2 = [](Tensor (*op)(const Tensor&, const Tensor&)) {
    return [op](Rng& rng) {
      const int h = 2 + static_cast<int>(rng.uniform_int(3));
      const int w = 2 + static_cast<int>(rng.uniform_int(3));
      std::vector<Tensor> in = {random_tensor({h, w}, rng),
                                random_tensor({h, w}, rng)};
      return gradcheck_all_elements(
          [op](const std::vector<Tensor>& t) { return op(t[0], t[1]); }, in,
          rng);
    };
  };

  std::vector<Entry> entries;
  entries.push_back({"add", elementwise2(&add)});
  entries.push_back({"sub", elementwise2(&sub)});
  entries.push_back({"mul", elementwise2(&mul)});
  entries.push_back({"add_scalar", [](Rng& rng) {
    const double c = rng.uniform(-2, 2);
    std::vector<Tensor> in = {random_tensor({3, 4}, rng)};
    return gradcheck_all_elements(
        [c](const std::vector<Tensor>& t) { return add_scalar(t[0], c); }, in,
        rng);
  }});
  entries.push_back({"mul_scalar", [](Rng& rng) {
    const double c = rng.uniform(-2, 2);
    std::vector<Tensor> in = {random_tensor({3, 4}, rng)};
    return gradcheck_all_elements(
        [c](const std::vector<Tensor>& t) { return mul_scalar(t[0], c); }, in,
        rng);
  }});
  entries.push_back({"sigmoid", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({2, 5}, rng, -3, 3)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return sigmoid(t[0]); }, in, rng);
  }});
  entries.push_back({"relu", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor_offzero({2, 5}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return relu(t[0]); }, in, rng);
  }});
  entries.push_back({"gelu", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({2, 5}, rng, -2.5, 2.5)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return gelu(t[0]); }, in, rng);
  }});
  entries.push_back({"broadcast_mul", [](Rng& rng) {
    const int c = 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<Tensor> in = {random_tensor({c, 3, 4}, rng),
                              random_tensor({1, 3, 4}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return broadcast_mul(t[0], t[1]); },
        in, rng);
  }});
  entries.push_back({"channel_max", [](Rng& rng) {
    const int c = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<Tensor> in = {random_tensor({c, 3, 3}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return channel_max(t[0]); }, in,
        rng);
  }});
  entries.push_back({"channel_avg", [](Rng& rng) {
    const int c = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<Tensor> in = {random_tensor({c, 3, 3}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return channel_avg(t[0]); }, in,
        rng);
  }});
  entries.push_back({"spatial_maxpool2", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({2, 4, 6}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return spatial_maxpool2(t[0]); },
        in, rng);
  }});
  entries.push_back({"spatial_avgpool", [](Rng& rng) {
    const int k = rng.bernoulli(0.5) ? 2 : 3;
    std::vector<Tensor> in = {random_tensor({2, 2 * k, 3 * k}, rng)};
    return gradcheck_all_elements(
        [k](const std::vector<Tensor>& t) { return spatial_avgpool(t[0], k); },
        in, rng);
  }});
  entries.push_back({"conv2d", [](Rng& rng) {
    const int k = rng.bernoulli(0.5) ? 1 : 3;
    const int stride = 1 + static_cast<int>(rng.uniform_int(2));
    const int pad = (k == 3) ? static_cast<int>(rng.uniform_int(2)) : 0;
    const int cin = 1 + static_cast<int>(rng.uniform_int(3));
    const int cout = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<Tensor> in = {random_tensor({cin, 5, 6}, rng),
                              random_tensor({cout, cin, k, k}, rng),
                              random_tensor({cout}, rng)};
    return gradcheck_all_elements(
        [stride, pad](const std::vector<Tensor>& t) {
          return conv2d(t[0], t[1], t[2], stride, pad);
        },
        in, rng);
  }});
  entries.push_back({"matmul", [](Rng& rng) {
    const int m = 2 + static_cast<int>(rng.uniform_int(3));
    const int k = 2 + static_cast<int>(rng.uniform_int(3));
    const int n = 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<Tensor> in = {random_tensor({m, k}, rng),
                              random_tensor({k, n}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return matmul(t[0], t[1]); }, in,
        rng);
  }});
  entries.push_back({"linear", [](Rng& rng) {
    const int t = 2 + static_cast<int>(rng.uniform_int(3));
    const int in_d = 2 + static_cast<int>(rng.uniform_int(3));
    const int out_d = 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<Tensor> in = {random_tensor({t, in_d}, rng),
                              random_tensor({in_d, out_d}, rng),
                              random_tensor({out_d}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return linear(t[0], t[1], t[2]); },
        in, rng);
  }});
  entries.push_back({"layer_norm", [](Rng& rng) {
    const int t = 2 + static_cast<int>(rng.uniform_int(3));
    const int d = 3 + static_cast<int>(rng.uniform_int(4));
    std::vector<Tensor> in = {random_tensor({t, d}, rng),
                              random_tensor({d}, rng, 0.5, 1.5),
                              random_tensor({d}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) {
          return layer_norm(t[0], t[1], t[2]);
        },
        in, rng);
  }});
  entries.push_back({"channel_layer_norm", [](Rng& rng) {
    const int c = 3 + static_cast<int>(rng.uniform_int(4));
    std::vector<Tensor> in = {random_tensor({c, 3, 4}, rng),
                              random_tensor({c}, rng, 0.5, 1.5),
                              random_tensor({c}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) {
          return channel_layer_norm(t[0], t[1], t[2]);
        },
        in, rng);
  }});
  entries.push_back({"softmax", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({3, 5}, rng, -2, 2)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return softmax_lastdim(t[0]); }, in,
        rng);
  }});
  entries.push_back({"cross_entropy", [](Rng& rng) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    const int label = static_cast<int>(rng.uniform_int(k));
    std::vector<Tensor> in = {random_tensor({k}, rng, -2, 2)};
    return gradcheck_all_elements(
        [label](const std::vector<Tensor>& t) {
          return cross_entropy(t[0], label);
        },
        in, rng);
  }});
  entries.push_back({"sum", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({2, 3, 4}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return sum(t[0]); }, in, rng);
  }});
  entries.push_back({"global_avg_pool", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({3, 4, 5}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return global_avg_pool(t[0]); }, in,
        rng);
  }});
  entries.push_back({"reshape", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({3, 4}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return reshape(t[0], {2, 6}); }, in,
        rng);
  }});
  entries.push_back({"transpose2d", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({3, 5}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return transpose2d(t[0]); }, in,
        rng);
  }});
  entries.push_back({"slice_cols", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({3, 6}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return slice_cols(t[0], 1, 3); },
        in, rng);
  }});
  entries.push_back({"concat_cols", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({3, 2}, rng),
                              random_tensor({3, 3}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) {
          return concat_cols({t[0], t[1]});
        },
        in, rng);
  }});
  entries.push_back({"concat_channels", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({2, 3, 4}, rng),
                              random_tensor({3, 3, 4}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) {
          return concat_channels(t[0], t[1]);
        },
        in, rng);
  }});
  entries.push_back({"patchify", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({3, 14, 14}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return patchify(t[0]); }, in, rng);
  }});
  entries.push_back({"tokens_to_chw", [](Rng& rng) {
    std::vector<Tensor> in = {random_tensor({12, 5}, rng)};
    return gradcheck_all_elements(
        [](const std::vector<Tensor>& t) { return tokens_to_chw(t[0], 3, 4); },
        in, rng);
  }});
  if (corrupt) {
    // Negative control: analytic gradient off by 1%; must be caught.
    entries.push_back({"corrupted_control", [](Rng& rng) {
      std::vector<Tensor> in = {random_tensor({3, 4}, rng)};
      return gradcheck_all_elements(
          [](const std::vector<Tensor>& t) { return sigmoid(t[0]); }, in, rng,
          1e-4, 1.01);
    }});
  }

  std::vector<OpCheckResult> results;
  for (const Entry& e : entries) {
    OpCheckResult r;
    r.op = e.name;
    r.instances = instances;
    Rng rng(derive_seed(seed, e.name));
    for (int i = 0; i < instances; ++i) {
      r.worst_rel_err = std::max(r.worst_rel_err, e.one_instance(rng));
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace mmnet
