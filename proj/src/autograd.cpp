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
#include "tegl/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_set>
#include <utility>

#include "tegl/error.hpp"

namespace tegl {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Var make_result(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const NodePtr& p) { return p->value.requires_grad; });
  n->value.requires_grad = any;
  if (any) {
    n->parents = std::move(parents);
    n->backward = std::move(fn);
  }
  return Var::from_node(std::move(n));
}

std::vector<float>& grad_of(Node& n) {
  if (n.value.grad.size() != n.value.numel()) n.value.grad.assign(n.value.numel(), 0.0f);
  return n.value.grad;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(s));
  }
}

float weight_at(std::span<const float> w, std::size_t i) { return w.empty() ? 1.0f : w[i]; }

void check_row_weights(std::span<const float> w, std::size_t rows, const char* op) {
  if (!w.empty() && w.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(w.size()) +
                         " row weights for " + std::to_string(rows) + " rows");
  }
}

// cols: [C*k*k, H*W]
void im2col(const float* x, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            float* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        float* row = cols + ((c * k + ky) * k + kx) * hw;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < H; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y) + dy;
          float* out = row + y * W;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill(out, out + W, 0.0f);
            continue;
          }
          const float* in = x + (c * H + static_cast<std::size_t>(iy)) * W;
          for (std::size_t xx = 0; xx < W; ++xx) {
            const auto ix = static_cast<std::ptrdiff_t>(xx) + dx;
            out[xx] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? 0.0f : in[ix];
          }
        }
      }
    }
  }
}

void col2im(const float* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t k,
            float* x) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const float* row = cols + ((c * k + ky) * k + kx) * hw;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::size_t y = 0; y < H; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y) + dy;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          float* out = x + (c * H + static_cast<std::size_t>(iy)) * W;
          const float* in = row + y * W;
          for (std::size_t xx = 0; xx < W; ++xx) {
            const auto ix = static_cast<std::ptrdiff_t>(xx) + dx;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) out[ix] += in[xx];
          }
        }
      }
    }
  }
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->value.requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<detail::Node> n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

float Var::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value.data[0];
}

void Var::set_requires_grad(bool on) {
  node_->value.requires_grad = on;
  if (!on) node_->value.grad.clear();
}

void Var::zero_grad() {
  if (node_->value.requires_grad) node_->value.grad.assign(node_->value.numel(), 0.0f);
}

void backward(const Var& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined value");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw StateError("backward called on a value that recorded no tape");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* root = loss.node().get();
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->value.requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) n->value.grad.assign(n->value.numel(), 0.0f);
  }
  grad_of(*root)[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.value.requires_grad) continue;
      auto& g = grad_of(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int k = 0; k < 2; ++k) {
      Node& p = *self.parents[k];
      if (!p.value.requires_grad) continue;
      const float sign = k == 0 ? 1.0f : -1.0f;
      auto& g = grad_of(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.value.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& gy = self.value.grad;
    if (pa.value.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * pb.value[i];
    }
    if (pb.value.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, float factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  return make_result(std::move(out), {a.node()}, [factor](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.value.grad[i];
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (float x : a.value().data) acc += x;
  return make_result(Tensor::scalar(static_cast<float>(acc)), {a.node()}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    const float gy = self.value.grad[0];
    for (float& x : g) x += gy;
  });
}

Var square(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * a.value()[i];
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0f * p.value[i] * self.value.grad[i];
  });
}

Var l2_norm(const Var& a) {
  double acc = 0.0;
  for (float x : a.value().data) acc += static_cast<double>(x) * x;
  const double norm = std::sqrt(acc);
  return make_result(Tensor::scalar(static_cast<float>(norm)), {a.node()}, [norm](Node& self) {
    if (norm == 0.0) return;
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    const double gy = self.value.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += static_cast<float>(gy * p.value[i] / norm);
    }
  });
}

Var relu(const Var& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(a.value()[i], 0.0f);
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (p.value[i] > 0.0f) g[i] += self.value.grad[i];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a.node()}, [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.value.grad[i];
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x.shape(), 2, "linear");
  require_rank(weight.shape(), 2, "linear");
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out = weight.shape()[0];
  if (weight.shape()[1] != in || bias.numel() != out) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " against weight " +
                         shape_str(weight.shape()));
  }
  Tensor y(Shape{batch, out});
  {
    ConstMapMat X(x.value().data.data(), batch, in);
    ConstMapMat Wm(weight.value().data.data(), out, in);
    MapMat Y(y.data.data(), batch, out);
    Y.noalias() = X * Wm.transpose();
    Eigen::Map<const Eigen::RowVectorXf> b(bias.value().data.data(), out);
    Y.rowwise() += b;
  }
  return make_result(std::move(y), {x.node(), weight.node(), bias.node()},
                     [batch, in, out](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    ConstMapMat G(self.value.grad.data(), batch, out);
    if (px.value.requires_grad) {
      MapMat GX(grad_of(px).data(), batch, in);
      ConstMapMat Wm(pw.value.data.data(), out, in);
      GX.noalias() += G * Wm;
    }
    if (pw.value.requires_grad) {
      MapMat GW(grad_of(pw).data(), out, in);
      ConstMapMat X(px.value.data.data(), batch, in);
      GW.noalias() += G.transpose() * X;
    }
    if (pb.value.requires_grad) {
      auto& gb = grad_of(pb);
      for (std::size_t o = 0; o < out; ++o) {
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) acc += G(b, o);
        gb[o] += static_cast<float>(acc);
      }
    }
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x.shape(), 4, "conv2d");
  require_rank(weight.shape(), 4, "conv2d");
  const std::size_t batch = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t O = weight.shape()[0], k = weight.shape()[2];
  if (weight.shape()[1] != C || weight.shape()[3] != k || k % 2 == 0 || bias.numel() != O) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " against weight " +
                         shape_str(weight.shape()));
  }
  const std::size_t ckk = C * k * k, hw = H * W;
  Tensor y(Shape{batch, O, H, W});
  std::vector<float> cols(ckk * hw);
  ConstMapMat Wm(weight.value().data.data(), O, ckk);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.value().data.data() + b * C * hw, C, H, W, k, cols.data());
    MapMat Y(y.data.data() + b * O * hw, O, hw);
    Y.noalias() = Wm * ConstMapMat(cols.data(), ckk, hw);
    for (std::size_t o = 0; o < O; ++o) Y.row(o).array() += bias.value()[o];
  }
  return make_result(std::move(y), {x.node(), weight.node(), bias.node()},
                     [batch, C, H, W, O, k, ckk, hw](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    std::vector<float> cols(ckk * hw);
    std::vector<float> gcols;
    ConstMapMat Wm(pw.value.data.data(), O, ckk);
    for (std::size_t b = 0; b < batch; ++b) {
      ConstMapMat G(self.value.grad.data() + b * O * hw, O, hw);
      if (pw.value.requires_grad) {
        im2col(px.value.data.data() + b * C * hw, C, H, W, k, cols.data());
        MapMat GW(grad_of(pw).data(), O, ckk);
        GW.noalias() += G * ConstMapMat(cols.data(), ckk, hw).transpose();
      }
      if (pb.value.requires_grad) {
        auto& gb = grad_of(pb);
        for (std::size_t o = 0; o < O; ++o) {
          double acc = 0.0;
          for (std::size_t i = 0; i < hw; ++i) acc += G(o, i);
          gb[o] += static_cast<float>(acc);
        }
      }
      if (px.value.requires_grad) {
        gcols.resize(ckk * hw);
        MapMat GC(gcols.data(), ckk, hw);
        GC.noalias() = Wm.transpose() * G;
        col2im(gcols.data(), C, H, W, k, grad_of(px).data() + b * C * hw);
      }
    }
  });
}

Var maxpool2d(const Var& x) {
  require_rank(x.shape(), 4, "maxpool2d");
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const std::size_t oh = H / 2, ow = W / 2;
  if (oh == 0 || ow == 0) throw DimensionError("maxpool2d: input too small " + shape_str(x.shape()));
  Tensor y(Shape{B, C, oh, ow});
  std::vector<std::uint32_t> arg(y.numel());
  const auto& in = x.value().data;
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const std::size_t base = bc * H * W;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + (2 * i) * W + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + (2 * i + di) * W + 2 * j + dj;
            if (in[idx] > in[best]) best = idx;
          }
        }
        y[o] = in[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result(std::move(y), {x.node()}, [arg = std::move(arg)](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.value.grad[i];
  });
}

Tensor softmax_rows(const Tensor& logits) {
  require_rank(logits.shape, 2, "softmax");
  const std::size_t rows = logits.shape[0], n = logits.shape[1];
  Tensor out(logits.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* z = logits.data.data() + r * n;
    const double mx = *std::max_element(z, z + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(z[j] - mx);
    for (std::size_t j = 0; j < n; ++j) {
      out[r * n + j] = static_cast<float>(std::exp(z[j] - mx) / total);
    }
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  require_rank(scores.shape, 2, "argmax");
  const std::size_t rows = scores.shape[0], n = scores.shape[1];
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* z = scores.data.data() + r * n;
    // max_element returns the first maximum, so ties go to the lowest index.
    out[r] = static_cast<int>(std::max_element(z, z + n) - z);
  }
  return out;
}

Var softmax(const Var& logits) {
  Tensor y = softmax_rows(logits.value());
  const std::size_t rows = y.shape[0], n = y.shape[1];
  return make_result(std::move(y), {logits.node()}, [rows, n](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    const auto& p = self.value.data;
    const auto& gy = self.value.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(gy[r * n + j]) * p[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        g[r * n + j] += static_cast<float>(p[r * n + j] * (gy[r * n + j] - dot));
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> labels,
                  std::span<const float> row_weights) {
  require_rank(logits.shape(), 2, "cross_entropy");
  const std::size_t rows = logits.shape()[0], n = logits.shape()[1];
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  check_row_weights(row_weights, rows, "cross_entropy");
  Tensor probs = softmax_rows(logits.value());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= n) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[r]) +
                          " out of range for " + std::to_string(n) + " classes");
    }
    const float* z = logits.value().data.data() + r * n;
    const double mx = *std::max_element(z, z + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(z[j] - mx);
    const double lse = mx + std::log(s);
    total += weight_at(row_weights, r) * (lse - z[labels[r]]);
  }
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<float> w(row_weights.begin(), row_weights.end());
  return make_result(Tensor::scalar(static_cast<float>(total / rows)), {logits.node()},
                     [probs = std::move(probs), lab = std::move(lab), w = std::move(w), rows,
                      n](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    const double gy = self.value.grad[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double f = gy * weight_at(w, r);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        const double onehot = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
        g[r * n + j] += static_cast<float>(f * (probs[r * n + j] - onehot));
      }
    }
  });
}

Var mse_rows(const Var& x, const Tensor& target, std::span<const float> row_weights) {
  if (x.shape().empty() || shape_numel(x.shape()) != target.numel()) {
    throw DimensionError("mse_rows: " + shape_str(x.shape()) + " vs target " +
                         shape_str(target.shape));
  }
  const std::size_t rows = x.shape()[0], d = x.numel() / rows;
  check_row_weights(row_weights, rows, "mse_rows");
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = static_cast<double>(x.value()[r * d + j]) - target[r * d + j];
      acc += diff * diff;
    }
    total += weight_at(row_weights, r) * acc / static_cast<double>(d);
  }
  std::vector<float> w(row_weights.begin(), row_weights.end());
  return make_result(Tensor::scalar(static_cast<float>(total / rows)), {x.node()},
                     [target, w = std::move(w), rows, d](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    const double gy = self.value.grad[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double f = gy * weight_at(w, r) * 2.0 / static_cast<double>(d);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        g[r * d + j] += static_cast<float>(f * (p.value[r * d + j] - target[r * d + j]));
      }
    }
  });
}

Var min_ref_mse(const Var& x, const Tensor& refs, std::span<const float> row_weights) {
  if (x.shape().empty() || refs.rank() != 2 || refs.shape[0] == 0) {
    throw DimensionError("min_ref_mse: bad shapes " + shape_str(x.shape()) + " / " +
                         shape_str(refs.shape));
  }
  const std::size_t rows = x.shape()[0], d = x.numel() / rows, nref = refs.shape[0];
  if (refs.shape[1] != d) {
    throw DimensionError("min_ref_mse: embedding length " + std::to_string(d) +
                         " vs reference length " + std::to_string(refs.shape[1]));
  }
  check_row_weights(row_weights, rows, "min_ref_mse");
  std::vector<std::size_t> best(rows, 0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (weight_at(row_weights, r) == 0.0f) continue;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < nref; ++q) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(x.value()[r * d + j]) - refs[q * d + j];
        acc += diff * diff;
      }
      if (acc < best_err) {
        best_err = acc;
        best[r] = q;
      }
    }
    total += weight_at(row_weights, r) * best_err / static_cast<double>(d);
  }
  std::vector<float> w(row_weights.begin(), row_weights.end());
  return make_result(Tensor::scalar(static_cast<float>(total / rows)), {x.node()},
                     [refs, best = std::move(best), w = std::move(w), rows, d](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    const double gy = self.value.grad[0] / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double f = gy * weight_at(w, r) * 2.0 / static_cast<double>(d);
      if (f == 0.0) continue;
      const float* ref = refs.data.data() + best[r] * d;
      for (std::size_t j = 0; j < d; ++j) {
        g[r * d + j] += static_cast<float>(f * (p.value[r * d + j] - ref[j]));
      }
    }
  });
}

}  // namespace tegl
