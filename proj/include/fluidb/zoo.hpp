#pragma once

#include <map>
#include <string>
#include <vector>

#include "fluidb/lowering.hpp"
#include "fluidb/workload.hpp"

// Architecture definitions for the shipped workloads.
namespace fluidb::zoo {

namespace detail {

class NetBuilder {
 public:
  NetBuilder(std::string name, int c, int h, int w) {
    net_.name = std::move(name);
    net_.input_c = c;
    net_.input_h = h;
    net_.input_w = w;
    shapes_["input"] = {c, h, w};
    last_ = "input";
  }

  const std::string& last() const { return last_; }

  std::string conv(const std::string& name, std::vector<std::string> inputs, int c_out, int k_h, int k_w,
                   int stride = 1, int pad_h = 0, int pad_w = 0) {
    return add(name, NetLayer::Kind::kConv, std::move(inputs), c_out, k_h, k_w, stride, pad_h, pad_w);
  }

  std::string conv(const std::string& name, int c_out, int k, int stride = 1, int pad = 0) {
    return conv(name, {last_}, c_out, k, k, stride, pad, pad);
  }

  std::string pool(const std::string& name, std::vector<std::string> inputs, int k, int stride, int pad = 0) {
    return add(name, NetLayer::Kind::kPool, std::move(inputs), 0, k, k, stride, pad, pad);
  }

  std::string fc(const std::string& name, int c_out) {
    return add(name, NetLayer::Kind::kFc, {last_}, c_out, 1, 1, 1, 0, 0);
  }

  // Registers a channel concatenation without emitting a layer; consumers list
  // the branch names directly, this only updates the default predecessor.
  void concat(std::vector<std::string> branches) { pending_concat_ = std::move(branches); }

  std::vector<std::string> head() const {
    return pending_concat_.empty() ? std::vector<std::string>{last_} : pending_concat_;
  }

  NetDescriptor build() && { return std::move(net_); }

 private:
  struct Shape {
    int c, h, w;
  };

  std::string add(const std::string& name, NetLayer::Kind kind, std::vector<std::string> inputs, int c_out,
                  int k_h, int k_w, int stride, int pad_h, int pad_w) {
    NetLayer layer;
    layer.name = name;
    layer.kind = kind;
    layer.inputs = inputs;
    int c = 0;
    int h = 0;
    int w = 0;
    for (const auto& src : inputs) {
      const Shape& s = shapes_.at(src);
      c += kind == NetLayer::Kind::kFc ? s.c * s.h * s.w : s.c;
      h = s.h;
      w = s.w;
    }
    layer.c_in = c;
    layer.h_in = kind == NetLayer::Kind::kFc ? 1 : h;
    layer.w_in = kind == NetLayer::Kind::kFc ? 1 : w;
    layer.c_out = c_out;
    layer.k_h = k_h;
    layer.k_w = k_w;
    layer.stride = stride;
    layer.pad_h = pad_h;
    layer.pad_w = pad_w;
    shapes_[name] = {layer.channels_out(), layer.h_out(), layer.w_out()};
    net_.layers.push_back(layer);
    last_ = name;
    pending_concat_.clear();
    return name;
  }

  NetDescriptor net_;
  std::map<std::string, Shape> shapes_;
  std::string last_;
  std::vector<std::string> pending_concat_;
};

}  // namespace detail

// ResNet-50 (v1.5 bottlenecks, 224x224 input): 53 convolutions including the
// four projection shortcuts, followed by the 1000-way classifier.
inline NetDescriptor resnet50_descriptor() {
  detail::NetBuilder b("resnet50", 3, 224, 224);
  b.conv("conv1", 64, 7, 2, 3);
  b.pool("maxpool", {b.last()}, 3, 2, 1);
  struct Stage {
    int blocks, mid, out, stride;
  };
  const Stage stages[] = {{3, 64, 256, 1}, {4, 128, 512, 2}, {6, 256, 1024, 2}, {3, 512, 2048, 2}};
  std::string block_in = b.last();
  for (int s = 0; s < 4; ++s) {
    for (int i = 0; i < stages[s].blocks; ++i) {
      const std::string p = "layer" + std::to_string(s + 1) + "." + std::to_string(i) + ".";
      const int stride = i == 0 ? stages[s].stride : 1;
      b.conv(p + "conv1", {block_in}, stages[s].mid, 1, 1);
      b.conv(p + "conv2", stages[s].mid, 3, stride, 1);
      const std::string main = b.conv(p + "conv3", stages[s].out, 1);
      if (i == 0) b.conv(p + "downsample", {block_in}, stages[s].out, 1, 1, stride);
      block_in = main;
    }
  }
  b.pool("avgpool", {block_in}, 7, 1);
  b.fc("fc", 1000);
  return std::move(b).build();
}

// Inception-v3 (299x299 input), branch convolutions listed in definition order.
inline NetDescriptor inception_v3_descriptor() {
  detail::NetBuilder b("inception_v3", 3, 299, 299);
  b.conv("Conv2d_1a_3x3", 32, 3, 2);
  b.conv("Conv2d_2a_3x3", 32, 3);
  b.conv("Conv2d_2b_3x3", 64, 3, 1, 1);
  b.pool("maxpool1", {b.last()}, 3, 2);
  b.conv("Conv2d_3b_1x1", 80, 1);
  b.conv("Conv2d_4a_3x3", 192, 3);
  b.pool("maxpool2", {b.last()}, 3, 2);

  auto inception_a = [&](const std::string& n, int pool_features) {
    const auto in = b.head();
    const auto b1 = b.conv(n + ".branch1x1", in, 64, 1, 1);
    b.conv(n + ".branch5x5_1", in, 48, 1, 1);
    const auto b5 = b.conv(n + ".branch5x5_2", 64, 5, 1, 2);
    b.conv(n + ".branch3x3dbl_1", in, 64, 1, 1);
    b.conv(n + ".branch3x3dbl_2", 96, 3, 1, 1);
    const auto b3 = b.conv(n + ".branch3x3dbl_3", 96, 3, 1, 1);
    b.pool(n + ".avgpool", in, 3, 1, 1);
    const auto bp = b.conv(n + ".branch_pool", pool_features, 1);
    b.concat({b1, b5, b3, bp});
  };
  auto inception_b = [&](const std::string& n) {
    const auto in = b.head();
    const auto b3 = b.conv(n + ".branch3x3", in, 384, 3, 3, 2);
    b.conv(n + ".branch3x3dbl_1", in, 64, 1, 1);
    b.conv(n + ".branch3x3dbl_2", 96, 3, 1, 1);
    const auto bd = b.conv(n + ".branch3x3dbl_3", 96, 3, 2);
    const auto bp = b.pool(n + ".maxpool", in, 3, 2);
    b.concat({b3, bd, bp});
  };
  auto inception_c = [&](const std::string& n, int c7) {
    const auto in = b.head();
    const auto b1 = b.conv(n + ".branch1x1", in, 192, 1, 1);
    b.conv(n + ".branch7x7_1", in, c7, 1, 1);
    b.conv(n + ".branch7x7_2", {b.last()}, c7, 1, 7, 1, 0, 3);
    const auto b7 = b.conv(n + ".branch7x7_3", {b.last()}, 192, 7, 1, 1, 3, 0);
    b.conv(n + ".branch7x7dbl_1", in, c7, 1, 1);
    b.conv(n + ".branch7x7dbl_2", {b.last()}, c7, 7, 1, 1, 3, 0);
    b.conv(n + ".branch7x7dbl_3", {b.last()}, c7, 1, 7, 1, 0, 3);
    b.conv(n + ".branch7x7dbl_4", {b.last()}, c7, 7, 1, 1, 3, 0);
    const auto bd = b.conv(n + ".branch7x7dbl_5", {b.last()}, 192, 1, 7, 1, 0, 3);
    b.pool(n + ".avgpool", in, 3, 1, 1);
    const auto bp = b.conv(n + ".branch_pool", 192, 1);
    b.concat({b1, b7, bd, bp});
  };
  auto inception_d = [&](const std::string& n) {
    const auto in = b.head();
    b.conv(n + ".branch3x3_1", in, 192, 1, 1);
    const auto b3 = b.conv(n + ".branch3x3_2", 320, 3, 2);
    b.conv(n + ".branch7x7x3_1", in, 192, 1, 1);
    b.conv(n + ".branch7x7x3_2", {b.last()}, 192, 1, 7, 1, 0, 3);
    b.conv(n + ".branch7x7x3_3", {b.last()}, 192, 7, 1, 1, 3, 0);
    const auto b7 = b.conv(n + ".branch7x7x3_4", 192, 3, 2);
    const auto bp = b.pool(n + ".maxpool", in, 3, 2);
    b.concat({b3, b7, bp});
  };
  auto inception_e = [&](const std::string& n) {
    const auto in = b.head();
    const auto b1 = b.conv(n + ".branch1x1", in, 320, 1, 1);
    const auto s3 = b.conv(n + ".branch3x3_1", in, 384, 1, 1);
    const auto b3a = b.conv(n + ".branch3x3_2a", {s3}, 384, 1, 3, 1, 0, 1);
    const auto b3b = b.conv(n + ".branch3x3_2b", {s3}, 384, 3, 1, 1, 1, 0);
    b.conv(n + ".branch3x3dbl_1", in, 448, 1, 1);
    const auto sd = b.conv(n + ".branch3x3dbl_2", 384, 3, 1, 1);
    const auto bda = b.conv(n + ".branch3x3dbl_3a", {sd}, 384, 1, 3, 1, 0, 1);
    const auto bdb = b.conv(n + ".branch3x3dbl_3b", {sd}, 384, 3, 1, 1, 1, 0);
    b.pool(n + ".avgpool", in, 3, 1, 1);
    const auto bp = b.conv(n + ".branch_pool", 192, 1);
    b.concat({b1, b3a, b3b, bda, bdb, bp});
  };

  inception_a("Mixed_5b", 32);
  inception_a("Mixed_5c", 64);
  inception_a("Mixed_5d", 64);
  inception_b("Mixed_6a");
  inception_c("Mixed_6b", 128);
  inception_c("Mixed_6c", 160);
  inception_c("Mixed_6d", 160);
  inception_c("Mixed_6e", 192);
  inception_d("Mixed_7a");
  inception_e("Mixed_7b");
  inception_e("Mixed_7c");
  b.pool("avgpool", b.head(), 8, 1);
  b.fc("fc", 1000);
  return std::move(b).build();
}

inline ModelSpec with_equidistant_exits(std::string name, std::vector<LayerSpec> layers,
                                        std::vector<double> rates) {
  ModelSpec model;
  model.name = std::move(name);
  auto placement = place_exits_equidistant(layers, static_cast<int>(rates.size()) - 1);
  model.layers = std::move(layers);
  model.exits.layer_indices = std::move(placement.layer_indices);
  model.exits.rates = std::move(rates);
  model.validate();
  return model;
}

// 4-exit ResNet-50 with the measured exit rates at confidence threshold 0.8.
inline ModelSpec resnet50_4exit() {
  return with_equidistant_exits("resnet50", conv_net_to_gemm(resnet50_descriptor()),
                                {0.051, 0.169, 0.090, 0.690});
}

inline ModelSpec inception_v3_4exit() {
  return with_equidistant_exits("inception_v3", conv_net_to_gemm(inception_v3_descriptor()),
                                {0.145, 0.186, 0.222, 0.447});
}

// Ten-layer model small enough for exhaustive checks.
inline ModelSpec synthetic10() {
  ModelSpec m;
  m.name = "synthetic10";
  const std::int64_t dims[10][3] = {
      {3136, 27, 32},  {3136, 288, 32}, {784, 288, 64},  {784, 576, 64},   {196, 576, 128},
      {196, 1152, 96}, {49, 864, 256},  {49, 2304, 200}, {49, 1800, 384}, {1, 384, 10},
  };
  for (int i = 0; i < 10; ++i) {
    m.layers.push_back({i, i == 9 ? LayerKind::kFc : LayerKind::kConv, dims[i][0], dims[i][1], dims[i][2]});
  }
  m.exits.layer_indices = {1, 4, 6, 9};
  m.exits.rates = {0.1, 0.2, 0.2, 0.5};
  m.validate();
  return m;
}

// Fifty identical-shape layers with exits after layers 12, 25, 37 and 49.
inline ModelSpec chain50() {
  ModelSpec m;
  m.name = "chain50";
  for (int i = 0; i < 50; ++i) m.layers.push_back({i, LayerKind::kConv, 196, 576, 64});
  m.exits.layer_indices = {12, 25, 37, 49};
  m.exits.rates = {0.25, 0.25, 0.25, 0.25};
  m.validate();
  return m;
}

inline NetDescriptor descriptor_by_name(const std::string& name) {
  if (name == "resnet50") return resnet50_descriptor();
  if (name == "inception_v3") return inception_v3_descriptor();
  throw InvalidArgument("unknown architecture '" + name + "'");
}

inline ModelSpec model_by_name(const std::string& name) {
  if (name == "resnet50") return resnet50_4exit();
  if (name == "inception_v3") return inception_v3_4exit();
  if (name == "synthetic10") return synthetic10();
  if (name == "chain50") return chain50();
  throw InvalidArgument("unknown model '" + name + "'");
}

}  // namespace fluidb::zoo
