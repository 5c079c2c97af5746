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
#include "tegl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "tegl/error.hpp"

namespace tegl {

namespace {

Var copy_param(const Var& v) {
  if (!v.defined()) return {};
  Tensor t(v.value().shape, v.value().data);
  return Var(std::move(t), v.requires_grad());
}

std::string layer_label(std::size_t i, const Layer& layer) {
  return "layer " + std::to_string(i) + " (" + to_string(layer.kind) + ")";
}

// Per-sample output shape of one layer, or DimensionError.
Shape infer_layer(std::size_t i, const Layer& layer, const Shape& s) {
  switch (layer.kind) {
    case LayerKind::conv:
      if (s.size() != 3 || s[0] != layer.in) {
        throw DimensionError(layer_label(i, layer) + ": expects [" + std::to_string(layer.in) +
                             ", H, W], got " + shape_str(s));
      }
      return {layer.out, s[1], s[2]};
    case LayerKind::relu:
      return s;
    case LayerKind::maxpool:
      if (s.size() != 3 || s[1] < 2 || s[2] < 2) {
        throw DimensionError(layer_label(i, layer) + ": expects [C, H>=2, W>=2], got " +
                             shape_str(s));
      }
      return {s[0], s[1] / 2, s[2] / 2};
    case LayerKind::flatten:
      return {shape_numel(s)};
    case LayerKind::linear:
      if (s.size() != 1 || s[0] != layer.in) {
        throw DimensionError(layer_label(i, layer) + ": expects [" + std::to_string(layer.in) +
                             "], got " + shape_str(s));
      }
      return {layer.out};
  }
  throw ContractError("unknown layer kind");
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

std::uint32_t get_u32(std::span<const unsigned char> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | b[at + static_cast<std::size_t>(k)];
  return v;
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (LayerKind k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool, LayerKind::flatten,
                      LayerKind::linear}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown layer type '" + name + "'");
}

LayerGraph::LayerGraph(std::string arch, Shape input_shape, std::size_t num_classes)
    : arch_(std::move(arch)), input_shape_(std::move(input_shape)), num_classes_(num_classes) {}

LayerGraph::LayerGraph(const LayerGraph& other)
    : arch_(other.arch_), input_shape_(other.input_shape_), num_classes_(other.num_classes_),
      layers_(other.layers_) {
  for (Layer& layer : layers_) {
    layer.weight = copy_param(layer.weight);
    layer.bias = copy_param(layer.bias);
  }
}

LayerGraph& LayerGraph::operator=(const LayerGraph& other) {
  if (this != &other) *this = LayerGraph(other);
  return *this;
}

void LayerGraph::add_conv(std::size_t in, std::size_t out, std::size_t kernel) {
  Layer layer;
  layer.kind = LayerKind::conv;
  layer.in = in;
  layer.out = out;
  layer.kernel = kernel;
  layer.weight = Var::parameter(Tensor(Shape{out, in, kernel, kernel}));
  layer.bias = Var::parameter(Tensor(Shape{out}));
  layers_.push_back(std::move(layer));
}

void LayerGraph::add_linear(std::size_t in, std::size_t out) {
  Layer layer;
  layer.kind = LayerKind::linear;
  layer.in = in;
  layer.out = out;
  layer.weight = Var::parameter(Tensor(Shape{out, in}));
  layer.bias = Var::parameter(Tensor(Shape{out}));
  layers_.push_back(std::move(layer));
}

void LayerGraph::add(LayerKind kind) {
  if (kind == LayerKind::conv || kind == LayerKind::linear) {
    throw ContractError("use add_conv/add_linear for parameterized layers");
  }
  Layer layer;
  layer.kind = kind;
  layers_.push_back(std::move(layer));
}

void LayerGraph::init_parameters(Rng& rng) {
  for (Layer& layer : layers_) {
    if (!layer.parameterized()) continue;
    const std::size_t fan_in =
        layer.kind == LayerKind::conv ? layer.in * layer.kernel * layer.kernel : layer.in;
    const double wb = std::sqrt(6.0 / static_cast<double>(fan_in));
    const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (float& w : layer.weight.mutable_value().data) w = static_cast<float>(rng.uniform(-wb, wb));
    for (float& b : layer.bias.mutable_value().data) b = static_cast<float>(rng.uniform(-bb, bb));
  }
}

Var LayerGraph::forward(const Var& x, std::size_t begin, std::size_t end) const {
  if (begin > end || end > layers_.size()) {
    throw ContractError("forward range [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") outside " + std::to_string(layers_.size()) + " layers");
  }
  if (x.shape().empty()) throw DimensionError("forward: input has no batch dimension");
  const std::size_t batch = x.shape()[0];
  Var h = x;
  for (std::size_t i = begin; i < end; ++i) {
    const Layer& layer = layers_[i];
    Shape sample(h.shape().begin() + 1, h.shape().end());
    Shape next = infer_layer(i, layer, sample);
    switch (layer.kind) {
      case LayerKind::conv: h = conv2d(h, layer.weight, layer.bias); break;
      case LayerKind::relu: h = relu(h); break;
      case LayerKind::maxpool: h = maxpool2d(h); break;
      case LayerKind::flatten: h = reshape(h, Shape{batch, next[0]}); break;
      case LayerKind::linear: h = linear(h, layer.weight, layer.bias); break;
    }
  }
  return h;
}

Tensor LayerGraph::predict(const Tensor& batch) const {
  return forward_eval(*this, batch);
}

std::vector<int> LayerGraph::classify(const Tensor& batch) const {
  return argmax_rows(predict(batch));
}

std::vector<Var> LayerGraph::parameters() const {
  std::vector<Var> out;
  for (const Layer& layer : layers_) {
    if (!layer.parameterized()) continue;
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

void LayerGraph::set_trainable(bool on) {
  for (Var& p : parameters()) p.set_requires_grad(on);
}

std::size_t LayerGraph::parameterized_count() const {
  return static_cast<std::size_t>(
      std::count_if(layers_.begin(), layers_.end(), [](const Layer& l) { return l.parameterized(); }));
}

std::size_t LayerGraph::layer_position(std::size_t param_index) const {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].parameterized() && ++seen == param_index) return i;
  }
  throw ContractError("parameterized layer " + std::to_string(param_index) + " out of range 1.." +
                      std::to_string(seen));
}

Shape LayerGraph::shape_after(std::size_t end) const {
  Shape s = input_shape_;
  for (std::size_t i = 0; i < end && i < layers_.size(); ++i) s = infer_layer(i, layers_[i], s);
  return s;
}

void LayerGraph::validate() const {
  const Shape out = shape_after(layers_.size());
  if (out.size() != 1 || out[0] != num_classes_) {
    throw DimensionError("graph emits " + shape_str(out) + " but declares " +
                         std::to_string(num_classes_) + " classes");
  }
}

Tensor forward_eval(const LayerGraph& graph, const Tensor& input) {
  Tensor batch = input;
  if (input.shape == graph.input_shape()) {
    Shape s{1};
    s.insert(s.end(), input.shape.begin(), input.shape.end());
    batch.shape = std::move(s);
  }
  Shape sample(batch.shape.begin() + (batch.shape.empty() ? 0 : 1), batch.shape.end());
  if (batch.shape.empty() || sample != graph.input_shape()) {
    throw DimensionError("input " + shape_str(input.shape) + " does not match graph input " +
                         shape_str(graph.input_shape()));
  }
  return graph.forward(Var(std::move(batch))).value();
}

LayerGraph build_arch(const std::string& name, const Shape& input_shape, std::size_t num_classes) {
  if (num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  if (input_shape.size() != 3) {
    throw ConfigError("input shape must be [C, H, W], got " + shape_str(input_shape));
  }
  const std::size_t c = input_shape[0];
  LayerGraph g(name, input_shape, num_classes);
  if (name == "cnn7") {
    g.add_conv(c, 8);
    g.add(LayerKind::relu);
    g.add_conv(8, 8);
    g.add(LayerKind::relu);
    g.add(LayerKind::maxpool);
    g.add_conv(8, 16);
    g.add(LayerKind::relu);
    g.add_conv(16, 16);
    g.add(LayerKind::relu);
    g.add(LayerKind::maxpool);
    g.add(LayerKind::flatten);
    const std::size_t flat = 16 * (input_shape[1] / 4) * (input_shape[2] / 4);
    g.add_linear(flat, 128);
    g.add(LayerKind::relu);
    g.add_linear(128, 64);
    g.add(LayerKind::relu);
    g.add_linear(64, num_classes);
  } else if (name == "vgg_slim") {
    const std::size_t widths[4] = {8, 16, 32, 32};
    std::size_t in = c, h = input_shape[1], w = input_shape[2];
    for (std::size_t block = 0; block < 4; ++block) {
      g.add_conv(in, widths[block]);
      g.add(LayerKind::relu);
      g.add_conv(widths[block], widths[block]);
      g.add(LayerKind::relu);
      g.add(LayerKind::maxpool);
      in = widths[block];
      h /= 2;
      w /= 2;
    }
    if (h == 0 || w == 0) throw ConfigError("vgg_slim needs inputs of at least 16x16");
    g.add(LayerKind::flatten);
    g.add_linear(in * h * w, 64);
    g.add(LayerKind::relu);
    g.add_linear(64, 64);
    g.add(LayerKind::relu);
    g.add_linear(64, num_classes);
  } else {
    throw ConfigError("unknown architecture '" + name + "' (expected cnn7 or vgg_slim)");
  }
  g.validate();
  return g;
}

SplitModel split_model(const LayerGraph& model, std::size_t l_sep) {
  const std::size_t count = model.parameterized_count();
  if (l_sep < 1 || l_sep > count) {
    throw ContractError("L_sep " + std::to_string(l_sep) + " outside 1.." + std::to_string(count));
  }
  const std::size_t pos = model.layer_position(l_sep);
  SplitModel split;
  split.l_sep = l_sep;
  const Shape boundary = model.shape_after(pos);
  split.extractor = LayerGraph(model.arch() + "/extractor", model.input_shape(), 0);
  split.classifier = LayerGraph(model.arch() + "/classifier", boundary, model.num_classes());
  LayerGraph copy = model;
  auto& layers = copy.layers();
  split.extractor.layers().assign(std::make_move_iterator(layers.begin()),
                                  std::make_move_iterator(layers.begin() + static_cast<std::ptrdiff_t>(pos)));
  split.classifier.layers().assign(std::make_move_iterator(layers.begin() + static_cast<std::ptrdiff_t>(pos)),
                                   std::make_move_iterator(layers.end()));
  for (std::size_t i = pos; i-- > 0;) {
    const LayerKind k = model.layers()[i].kind;
    if (k == LayerKind::maxpool || k == LayerKind::flatten) continue;
    split.post_relu_boundary = (k == LayerKind::relu);
    break;
  }
  return split;
}

LayerGraph join_model(const SplitModel& split, const std::string& arch, const Shape& input_shape) {
  LayerGraph g(arch, input_shape, split.classifier.num_classes());
  LayerGraph a = split.extractor;
  LayerGraph b = split.classifier;
  for (Layer& l : a.layers()) g.layers().push_back(std::move(l));
  for (Layer& l : b.layers()) g.layers().push_back(std::move(l));
  g.validate();
  return g;
}

std::vector<unsigned char> serialize(const LayerGraph& model) {
  nlohmann::json header;
  header["arch"] = model.arch();
  header["input_shape"] = model.input_shape();
  header["num_classes"] = model.num_classes();
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : model.layers()) {
    nlohmann::json j{{"type", to_string(l.kind)}};
    if (l.kind == LayerKind::conv) {
      j["in"] = l.in;
      j["out"] = l.out;
      j["kernel"] = l.kernel;
    } else if (l.kind == LayerKind::linear) {
      j["in"] = l.in;
      j["out"] = l.out;
    }
    layers.push_back(std::move(j));
  }
  header["layers"] = std::move(layers);
  const std::string text = header.dump();

  std::vector<unsigned char> out{'T', 'E', 'G', 'L'};
  put_u16(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const Var& p : model.parameters()) {
    for (float f : p.value().data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

LayerGraph deserialize(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "TEGL")) {
    throw FormatError("bad magic: not a tegl model file", 0);
  }
  if (bytes.size() < 6) throw FormatError("truncated version field", 4);
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kModelFormatVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version), 4);
  }
  if (bytes.size() < 10) throw FormatError("truncated header length", 6);
  const std::size_t header_len = get_u32(bytes, 6);
  if (header_len > bytes.size() - 10) {
    throw FormatError("header length " + std::to_string(header_len) + " exceeds file size", 6);
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 10,
                                   bytes.begin() + 10 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("malformed JSON header: ") + e.what(), 10 + e.byte);
  }

  LayerGraph g;
  try {
    g = LayerGraph(header.at("arch").get<std::string>(), header.at("input_shape").get<Shape>(),
                   header.at("num_classes").get<std::size_t>());
    for (const auto& jl : header.at("layers")) {
      const LayerKind kind = layer_kind_from_string(jl.at("type").get<std::string>());
      if (kind == LayerKind::conv) {
        g.add_conv(jl.at("in"), jl.at("out"), jl.at("kernel"));
      } else if (kind == LayerKind::linear) {
        g.add_linear(jl.at("in"), jl.at("out"));
      } else {
        g.add(kind);
      }
    }
    g.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("invalid model header: ") + e.what(), 10);
  }

  std::size_t at = 10 + header_len;
  for (Var& p : g.parameters()) {
    auto& data = p.mutable_value().data;
    if (bytes.size() - at < data.size() * 4) {
      throw FormatError("truncated weight blob", at);
    }
    for (float& f : data) {
      f = std::bit_cast<float>(get_u32(bytes, at));
      at += 4;
    }
  }
  if (at != bytes.size()) throw FormatError("unexpected trailing bytes", at);
  return g;
}

void save_model(const LayerGraph& model, const std::filesystem::path& path) {
  const auto bytes = serialize(model);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing " + path.string());
}

LayerGraph load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open model file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace tegl
