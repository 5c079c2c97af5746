/* Copyright 2026 The Tegl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "tegl/autograd.hpp"
#include "tegl/rng.hpp"

namespace tegl::testing {

double reference_quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double h = (n - 1.0) * p + 1.0;
  const double fl = std::floor(h);
  const auto at = [&](double k) { return values[static_cast<std::size_t>(std::clamp(k, 1.0, n)) - 1]; };
  return at(fl) + (h - fl) * (at(fl + 1.0) - at(fl));
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (float& x : t.data) x = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Weighted sum turns any output into a scalar with a generic gradient.
Var project(const Var& out, const Tensor& weights) {
  return sum(mul(out, Var(weights)));
}

struct Case {
  std::string name;
  std::vector<Var> leaves;
  std::function<Var()> loss;
};

double min_abs(const Tensor& t) {
  double m = std::numeric_limits<double>::infinity();
  for (float x : t.data) m = std::min(m, std::abs(static_cast<double>(x)));
  return m;
}

// Smallest gap between the largest and second largest entry of any 2x2 window.
double pool_gap(const Tensor& x) {
  const std::size_t planes = x.shape[0] * x.shape[1], h = x.shape[2], w = x.shape[3];
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i + 1 < h; i += 2) {
      for (std::size_t j = 0; j + 1 < w; j += 2) {
        std::vector<float> v;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) v.push_back(x.data[(p * h + i + di) * w + j + dj]);
        }
        std::sort(v.begin(), v.end());
        gap = std::min(gap, static_cast<double>(v[3] - v[2]));
      }
    }
  }
  return gap;
}

Tensor ref_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t rows = x.shape[0], in = x.shape[1], out = w.shape[0];
  Tensor y(Shape{rows, out});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b.data[o];
      for (std::size_t i = 0; i < in; ++i) s += static_cast<double>(x.data[r * in + i]) * w.data[o * in + i];
      y.data[r * out + o] = static_cast<float>(s);
    }
  }
  return y;
}

// Returns false when the draw sits too close to a kink.
bool draw_case(int kind, Rng& rng, double margin, Case& c) {
  const std::size_t rows = 1 + rng.below(3);
  switch (kind) {
    case 0: {
      const std::size_t in = 2 + rng.below(5), out = 1 + rng.below(4);
      Var x = Var::parameter(random_tensor(rng, {rows, in}));
      Var w = Var::parameter(random_tensor(rng, {out, in}));
      Var b = Var::parameter(random_tensor(rng, {out}));
      const Tensor r = random_tensor(rng, {rows, out});
      c = {"linear", {x, w, b}, [=] { return project(linear(x, w, b), r); }};
      return true;
    }
    case 1: {
      const std::size_t ch = 1 + rng.below(2), out = 1 + rng.below(2), k = rng.below(2) ? 3 : 1;
      const std::size_t h = 3 + rng.below(3), w = 3 + rng.below(3);
      Var x = Var::parameter(random_tensor(rng, {rows, ch, h, w}));
      Var wt = Var::parameter(random_tensor(rng, {out, ch, k, k}));
      Var b = Var::parameter(random_tensor(rng, {out}));
      const Tensor r = random_tensor(rng, {rows, out, h, w});
      c = {"conv2d", {x, wt, b}, [=] { return project(conv2d(x, wt, b), r); }};
      return true;
    }
    case 2: {
      const std::size_t ch = 1 + rng.below(2), h = 2 * (1 + rng.below(2)), w = 2 * (1 + rng.below(2));
      const Tensor xv = random_tensor(rng, {rows, ch, h, w});
      if (pool_gap(xv) < margin) return false;
      Var x = Var::parameter(xv);
      const Tensor r = random_tensor(rng, {rows, ch, h / 2, w / 2});
      c = {"maxpool2d", {x}, [=] { return project(maxpool2d(x), r); }};
      return true;
    }
    case 3: {
      const Tensor xv = random_tensor(rng, {rows, 2 + rng.below(6)});
      if (min_abs(xv) < margin) return false;
      Var x = Var::parameter(xv);
      const Tensor r = random_tensor(rng, xv.shape);
      c = {"relu", {x}, [=] { return project(relu(x), r); }};
      return true;
    }
    case 4: {
      const std::size_t n = 2 + rng.below(5);
      Var x = Var::parameter(random_tensor(rng, {rows, n}, -2.0, 2.0));
      const Tensor target = random_tensor(rng, {rows, n}, 0.0, 1.0);
      std::vector<float> wts(rows);
      for (float& v : wts) v = static_cast<float>(rng.uniform(0.0, 2.0));
      c = {"softmax+mse_rows", {x}, [=] { return mse_rows(softmax(x), target, wts); }};
      return true;
    }
    case 5: {
      const std::size_t n = 2 + rng.below(5);
      Var x = Var::parameter(random_tensor(rng, {rows, n}, -3.0, 3.0));
      std::vector<int> labels(rows);
      std::vector<float> wts(rows);
      for (auto& l : labels) l = static_cast<int>(rng.below(n));
      for (float& v : wts) v = static_cast<float>(rng.uniform(0.0, 2.0));
      c = {"cross_entropy", {x}, [=] { return cross_entropy(x, labels, wts); }};
      return true;
    }
    case 6: {
      const Tensor av = random_tensor(rng, {rows, 3});
      if (std::sqrt(std::inner_product(av.data.begin(), av.data.end(), av.data.begin(), 0.0)) < margin * 10) {
        return false;
      }
      Var a = Var::parameter(av);
      Var b = Var::parameter(random_tensor(rng, {rows, 3}));
      const float s = static_cast<float>(rng.uniform(-2.0, 2.0));
      c = {"l2_norm/square/add/sub/scale", {a, b}, [=] {
             return add(scale(l2_norm(a), s), sum(square(sub(add(a, b), scale(b, 0.5f)))));
           }};
      return true;
    }
    case 7: {
      const std::size_t d = 2 + rng.below(4), refs_n = 2 + rng.below(3);
      const Tensor xv = random_tensor(rng, {rows, d});
      const Tensor refs = random_tensor(rng, {refs_n, d});
      for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> dist;
        for (std::size_t k = 0; k < refs_n; ++k) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double diff = xv.data[r * d + j] - refs.data[k * d + j];
            s += diff * diff;
          }
          dist.push_back(s / static_cast<double>(d));
        }
        std::sort(dist.begin(), dist.end());
        if (dist[1] - dist[0] < margin * 10) return false;
      }
      Var x = Var::parameter(xv);
      c = {"min_ref_mse", {x}, [=] { return min_ref_mse(x, refs); }};
      return true;
    }
    default: {
      const std::size_t in = 3 + rng.below(4), hid = 2 + rng.below(4), n = 2 + rng.below(3);
      const Tensor xv = random_tensor(rng, {rows, in});
      const Tensor w1v = random_tensor(rng, {hid, in});
      const Tensor b1v = random_tensor(rng, {hid});
      if (min_abs(ref_linear(xv, w1v, b1v)) < margin * 20) return false;
      Var x = Var::parameter(xv);
      Var w1 = Var::parameter(w1v);
      Var b1 = Var::parameter(b1v);
      Var w2 = Var::parameter(random_tensor(rng, {n, hid}));
      Var b2 = Var::parameter(random_tensor(rng, {n}));
      std::vector<int> labels(rows);
      for (auto& l : labels) l = static_cast<int>(rng.below(n));
      c = {"mlp+reshape", {x, w1, b1, w2, b2}, [=] {
             Var h = relu(linear(reshape(x, Shape{rows, in}), w1, b1));
             return cross_entropy(linear(h, w2, b2), labels);
           }};
      return true;
    }
  }
}

}  // namespace

GradCheckSummary run_gradient_checks(int cases, std::uint64_t seed, double h, double tolerance) {
  GradCheckSummary summary;
  Rng root(seed);
  constexpr int kKinds = 9;
  for (int i = 0; i < cases; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    Case c;
    while (!draw_case(i % kKinds, rng, 4.0 * h, c)) ++summary.regenerated;

    Var loss = c.loss();
    for (Var& v : c.leaves) v.zero_grad();
    backward(loss);
    double diff2 = 0.0, ref2 = 0.0, ad2 = 0.0;
    for (Var& v : c.leaves) {
      const std::vector<float> analytic(v.grad().begin(), v.grad().end());
      for (std::size_t k = 0; k < v.numel(); ++k) {
        float& x = v.mutable_value().data[k];
        const float saved = x;
        x = static_cast<float>(saved + h);
        const double up = c.loss().item();
        x = static_cast<float>(saved - h);
        const double down = c.loss().item();
        x = saved;
        const double fd = (up - down) / (2.0 * h);
        diff2 += (fd - analytic[k]) * (fd - analytic[k]);
        ref2 += fd * fd;
        ad2 += static_cast<double>(analytic[k]) * analytic[k];
      }
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(ref2), std::sqrt(ad2), 1e-6});
    ++summary.cases;
    if (rel > tolerance) ++summary.failures;
    if (rel > summary.worst_relative_error) {
      summary.worst_relative_error = rel;
      summary.worst_case = c.name + " #" + std::to_string(i);
    }
  }
  return summary;
}

DatasetSplits toy_digits(std::size_t per_class_train, std::size_t per_class_test, std::size_t classes,
                         std::uint64_t seed) {
  Rng rng = Rng(seed).split("toy");
  DatasetSplits out;
  out.format = "raw";
  out.train = LabeledDataset(Shape{1, 8, 8}, classes);
  out.test = LabeledDataset(Shape{1, 8, 8}, classes);
  auto draw = [&](int cls) {
    Tensor img(Shape{1, 8, 8});
    for (float& v : img.data) v = static_cast<float>(rng.uniform(0.0, 0.2));
    // Class k lights row k (rows wrap onto columns past 8).
    for (std::size_t j = 0; j < 8; ++j) {
      const std::size_t k = static_cast<std::size_t>(cls);
      if (k < 8) {
        img.data[k * 8 + j] = static_cast<float>(rng.uniform(0.7, 1.0));
      } else {
        img.data[j * 8 + (k - 8)] = static_cast<float>(rng.uniform(0.7, 1.0));
      }
    }
    return img;
  };
  for (std::size_t i = 0; i < per_class_train; ++i) {
    for (std::size_t c = 0; c < classes; ++c) out.train.push(draw(static_cast<int>(c)), static_cast<int>(c));
  }
  for (std::size_t i = 0; i < per_class_test; ++i) {
    for (std::size_t c = 0; c < classes; ++c) out.test.push(draw(static_cast<int>(c)), static_cast<int>(c));
  }
  return out;
}

LabeledDataset toy_bars28(std::size_t per_class, std::size_t classes, std::uint64_t seed) {
  LabeledDataset d(Shape{1, 28, 28}, classes);
  Rng rng(seed);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      Tensor t(Shape{1, 28, 28});
      for (float& x : t.data) x = static_cast<float>(0.1 * rng.uniform());
      for (std::size_t r = 2 * k + 3; r < 2 * k + 6; ++r) {
        for (std::size_t c = 6; c < 22; ++c) t.data[r * 28 + c] = 1.0f;
      }
      d.push(t, static_cast<int>(k));
    }
  }
  return d;
}

LayerGraph toy_mlp(std::size_t classes, std::uint64_t seed) {
  LayerGraph g("toy_mlp", Shape{1, 8, 8}, classes);
  g.add(LayerKind::flatten);
  g.add_linear(64, 32);
  g.add(LayerKind::relu);
  g.add_linear(32, 16);
  g.add(LayerKind::relu);
  g.add_linear(16, classes);
  Rng init = Rng(seed).split("init");
  g.init_parameters(init);
  return g;
}

}  // namespace tegl::testing
