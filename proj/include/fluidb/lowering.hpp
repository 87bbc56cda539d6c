#pragma once

#include <map>
#include <string>
#include <vector>

#include "fluidb/common.hpp"
#include "fluidb/workload.hpp"

namespace fluidb {

// Layer of a convolutional network description. Pool layers carry shape only
// and produce no GEMM. `inputs` names earlier layers (or "input") whose outputs
// are concatenated along channels; empty means "the previous layer".
struct NetLayer {
  enum class Kind { kConv, kFc, kPool };

  std::string name;
  Kind kind = Kind::kConv;
  std::vector<std::string> inputs;
  int c_in = 0;
  int h_in = 1;
  int w_in = 1;
  int c_out = 0;
  int k_h = 1;
  int k_w = 1;
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;

  int h_out() const { return kind == Kind::kFc ? 1 : (h_in + 2 * pad_h - k_h) / stride + 1; }
  int w_out() const { return kind == Kind::kFc ? 1 : (w_in + 2 * pad_w - k_w) / stride + 1; }
  int channels_out() const { return kind == Kind::kPool ? c_in : c_out; }
};

struct NetDescriptor {
  std::string name;
  int input_c = 3;
  int input_h = 224;
  int input_w = 224;
  std::vector<NetLayer> layers;
};

namespace detail {

struct Shape {
  int c, h, w;
};

}  // namespace detail

inline std::vector<LayerSpec> conv_net_to_gemm(const NetDescriptor& net) {
  std::map<std::string, detail::Shape> produced;
  produced["input"] = {net.input_c, net.input_h, net.input_w};
  std::string previous = "input";
  std::vector<LayerSpec> out;

  for (const auto& layer : net.layers) {
    if (layer.name.empty() || produced.count(layer.name) != 0) {
      throw InvalidDescriptor("layer names must be unique and non-empty ('" + layer.name + "')");
    }
    const std::vector<std::string> sources =
        layer.inputs.empty() ? std::vector<std::string>{previous} : layer.inputs;

    long long fan_in = 0;  // channels, or flattened elements for FC
    int h = -1;
    int w = -1;
    for (const auto& src : sources) {
      auto it = produced.find(src);
      if (it == produced.end()) {
        throw InvalidDescriptor("layer '" + layer.name + "' reads unknown source '" + src + "'");
      }
      const auto& s = it->second;
      if (layer.kind == NetLayer::Kind::kFc) {
        fan_in += static_cast<long long>(s.c) * s.h * s.w;
        continue;
      }
      if (h >= 0 && (s.h != h || s.w != w)) {
        throw InvalidDescriptor("layer '" + layer.name + "' concatenates inputs of different spatial size");
      }
      h = s.h;
      w = s.w;
      fan_in += s.c;
    }
    if (fan_in != layer.c_in) {
      throw InvalidDescriptor("layer '" + layer.name + "' declares c_in=" + std::to_string(layer.c_in) +
                              " but its inputs provide " + std::to_string(fan_in));
    }
    if (layer.kind != NetLayer::Kind::kFc && (h != layer.h_in || w != layer.w_in)) {
      throw InvalidDescriptor("layer '" + layer.name + "' declares input " + std::to_string(layer.h_in) + "x" +
                              std::to_string(layer.w_in) + " but receives " + std::to_string(h) + "x" +
                              std::to_string(w));
    }
    if (layer.kind != NetLayer::Kind::kPool && layer.c_out < 1) {
      throw InvalidDescriptor("layer '" + layer.name + "' has no output channels");
    }
    if (layer.stride < 1 || layer.h_out() < 1 || layer.w_out() < 1) {
      throw InvalidDescriptor("layer '" + layer.name + "' has an empty output");
    }

    produced[layer.name] = {layer.channels_out(), layer.h_out(), layer.w_out()};
    previous = layer.name;

    if (layer.kind == NetLayer::Kind::kPool) continue;
    LayerSpec spec;
    spec.index = static_cast<int>(out.size());
    if (layer.kind == NetLayer::Kind::kFc) {
      spec.kind = LayerKind::kFc;
      spec.rows = 1;
      spec.reduction = layer.c_in;
      spec.cols = layer.c_out;
    } else {
      spec.kind = LayerKind::kConv;
      spec.rows = static_cast<std::int64_t>(layer.h_out()) * layer.w_out();
      spec.reduction = static_cast<std::int64_t>(layer.c_in) * layer.k_h * layer.k_w;
      spec.cols = layer.c_out;
    }
    out.push_back(spec);
  }
  if (out.empty()) throw InvalidDescriptor("network has no compute layers");
  return out;
}

}  // namespace fluidb
