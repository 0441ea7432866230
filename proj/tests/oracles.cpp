#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracles {

std::vector<double> conv2d(const std::vector<double>& x, int cin, int h, int w,
                           const std::vector<double>& weight, int cout, int k,
                           const std::vector<double>& bias, int stride,
                           int pad, int& ho, int& wo) {
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> y(static_cast<size_t>(cout) * ho * wo, 0.0);
  for (int o = 0; o < cout; ++o) {
    for (int oi = 0; oi < ho; ++oi) {
      for (int oj = 0; oj < wo; ++oj) {
        double acc = bias[o];
        for (int ci = 0; ci < cin; ++ci) {
          for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
              const int ii = oi * stride + ki - pad;
              const int jj = oj * stride + kj - pad;
              if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
              acc += x[(static_cast<size_t>(ci) * h + ii) * w + jj] *
                     weight[((static_cast<size_t>(o) * cin + ci) * k + ki) * k +
                            kj];
            }
          }
        }
        y[(static_cast<size_t>(o) * ho + oi) * wo + oj] = acc;
      }
    }
  }
  return y;
}

std::vector<double> channel_max(const std::vector<double>& x, int c, int h,
                                int w) {
  std::vector<double> y(static_cast<size_t>(h) * w);
  for (int i = 0; i < h * w; ++i) {
    double best = x[i];
    for (int ci = 1; ci < c; ++ci)
      best = std::max(best, x[static_cast<size_t>(ci) * h * w + i]);
    y[i] = best;
  }
  return y;
}

std::vector<double> channel_avg(const std::vector<double>& x, int c, int h,
                                int w) {
  std::vector<double> y(static_cast<size_t>(h) * w);
  for (int i = 0; i < h * w; ++i) {
    double acc = 0.0;
    for (int ci = 0; ci < c; ++ci)
      acc += x[static_cast<size_t>(ci) * h * w + i];
    y[i] = acc / c;
  }
  return y;
}

std::vector<double> maxpool2(const std::vector<double>& x, int c, int h,
                             int w) {
  const int ho = h / 2, wo = w / 2;
  std::vector<double> y(static_cast<size_t>(c) * ho * wo);
  for (int ci = 0; ci < c; ++ci) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        double best = -1e300;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj)
            best = std::max(
                best, x[(static_cast<size_t>(ci) * h + 2 * i + di) * w +
                        2 * j + dj]);
        y[(static_cast<size_t>(ci) * ho + i) * wo + j] = best;
      }
    }
  }
  return y;
}

std::vector<double> dense_attention(const std::vector<double>& q,
                                    const std::vector<double>& k,
                                    const std::vector<double>& v, int t,
                                    int d) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores(static_cast<size_t>(t) * t);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) {
      double acc = 0.0;
      for (int e = 0; e < d; ++e)
        acc += q[static_cast<size_t>(i) * d + e] *
               k[static_cast<size_t>(j) * d + e];
      scores[static_cast<size_t>(i) * t + j] = acc * scale;
    }
  }
  for (int i = 0; i < t; ++i) {
    double* row = scores.data() + static_cast<size_t>(i) * t;
    double mx = row[0];
    for (int j = 1; j < t; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < t; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (int j = 0; j < t; ++j) row[j] /= z;
  }
  std::vector<double> out(static_cast<size_t>(t) * d, 0.0);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < t; ++j) {
      const double a = scores[static_cast<size_t>(i) * t + j];
      for (int e = 0; e < d; ++e)
        out[static_cast<size_t>(i) * d + e] +=
            a * v[static_cast<size_t>(j) * d + e];
    }
  return out;
}

MetricResult metrics_bruteforce(
    const std::vector<std::vector<long long>>& cm) {
  const int k = static_cast<int>(cm.size());
  // Expand the matrix into (truth, prediction) decisions and recount.
  std::vector<std::pair<int, int>> decisions;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      for (long long n = 0; n < cm[i][j]; ++n) decisions.emplace_back(i, j);

  MetricResult r;
  long long correct = 0;
  for (auto& [t, p] : decisions)
    if (t == p) ++correct;
  r.accuracy = decisions.empty()
                   ? 0.0
                   : static_cast<double>(correct) / decisions.size();
  double f1_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    long long tp = 0, fp = 0, fn = 0;
    for (auto& [t, p] : decisions) {
      if (t == c && p == c) ++tp;
      if (t != c && p == c) ++fp;
      if (t == c && p != c) ++fn;
    }
    double f1 = 0.0;
    if (2 * tp + fp + fn > 0)
      f1 = (2.0 * tp) / static_cast<double>(2 * tp + fp + fn);
    r.per_class_f1.push_back(f1);
    f1_sum += f1;
  }
  r.macro_f1 = k > 0 ? f1_sum / k : 0.0;
  return r;
}

double adamw_scalar_step(double p, double g, double m, double v, int t,
                         double lr, double beta1, double beta2, double eps,
                         double lambda, double* m_out, double* v_out) {
  p -= lr * lambda * p;
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g * g;
  const double mhat = m / (1.0 - std::pow(beta1, t));
  const double vhat = v / (1.0 - std::pow(beta2, t));
  p -= lr * mhat / (std::sqrt(vhat) + eps);
  if (m_out) *m_out = m;
  if (v_out) *v_out = v;
  return p;
}

}  // namespace oracles
