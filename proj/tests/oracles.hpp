#pragma once

// Independent reference implementations the tests check the library against.
// Everything here is deliberately written the slow, obvious way and must not
// call into the op implementations it verifies.

#include <cstdint>
#include <vector>

namespace oracles {

// Direct cross-correlation, quadruple loop over output position and kernel.
std::vector<double> conv2d(const std::vector<double>& x, int cin, int h, int w,
                           const std::vector<double>& weight, int cout, int k,
                           const std::vector<double>& bias, int stride,
                           int pad, int& ho, int& wo);

std::vector<double> channel_max(const std::vector<double>& x, int c, int h,
                                int w);
std::vector<double> channel_avg(const std::vector<double>& x, int c, int h,
                                int w);
std::vector<double> maxpool2(const std::vector<double>& x, int c, int h,
                             int w);

// Dense single-head scaled dot-product attention over row-major tokens
// [t, d]: softmax(Q K^T / sqrt(d)) V with Q=K=V=tokens (projections applied
// by the caller).
std::vector<double> dense_attention(const std::vector<double>& q,
                                    const std::vector<double>& k,
                                    const std::vector<double>& v, int t,
                                    int d);

// Accuracy and unweighted macro-F1 recomputed from an integer confusion
// matrix (rows = truth) by expanding it into individual decisions.
struct MetricResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
};
MetricResult metrics_bruteforce(const std::vector<std::vector<long long>>& cm);

// One hand-executed decoupled-weight-decay adaptive step on a scalar.
double adamw_scalar_step(double p, double g, double m, double v, int t,
                         double lr, double beta1, double beta2, double eps,
                         double lambda, double* m_out = nullptr,
                         double* v_out = nullptr);

}  // namespace oracles
