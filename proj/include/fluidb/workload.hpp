#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fluidb/common.hpp"

namespace fluidb {

enum class LayerKind { kConv, kFc };

inline const char* to_string(LayerKind kind) {
  return kind == LayerKind::kConv ? "conv" : "fc";
}

// One DNN layer lowered to an R x P by P x C GEMM.
struct LayerSpec {
  int index = 0;
  LayerKind kind = LayerKind::kConv;
  std::int64_t rows = 1;       // R: output spatial positions
  std::int64_t reduction = 1;  // P: input channels x kernel area
  std::int64_t cols = 1;       // C: output channels

  std::uint64_t macs() const {
    return static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(reduction) *
           static_cast<std::uint64_t>(cols);
  }

  void validate() const {
    if (rows < 1 || reduction < 1 || cols < 1) {
      throw InvalidArgument("layer " + std::to_string(index) + " has a non-positive GEMM dimension");
    }
    if (kind == LayerKind::kFc && rows != 1) {
      throw InvalidArgument("FC layer " + std::to_string(index) + " must have R = 1");
    }
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Exit heads and the marginal probability that a sample leaves at each one.
struct ExitProfile {
  std::vector<int> layer_indices;
  std::vector<double> rates;

  std::size_t size() const { return layer_indices.size(); }

  void validate(int num_layers) const {
    if (layer_indices.empty()) throw InvalidProfile("no exits");
    if (layer_indices.size() != rates.size()) {
      throw InvalidProfile("layer_indices and rates differ in length");
    }
    for (std::size_t i = 0; i < layer_indices.size(); ++i) {
      if (layer_indices[i] < 0 || layer_indices[i] >= num_layers) {
        throw InvalidProfile("exit layer index " + std::to_string(layer_indices[i]) + " out of range");
      }
      if (i > 0 && layer_indices[i] <= layer_indices[i - 1]) {
        throw InvalidProfile("exit layer indices must be strictly increasing");
      }
    }
    if (layer_indices.back() != num_layers - 1) {
      throw InvalidProfile("last exit must sit after the final layer");
    }
    validate_rates();
  }

  void validate_rates() const {
    double sum = 0.0;
    for (double r : rates) {
      if (!(r >= 0.0 && r <= 1.0)) throw InvalidProfile("exit rate outside [0, 1]");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw InvalidProfile("exit rates sum to " + std::to_string(sum));
    }
  }

  friend bool operator==(const ExitProfile&, const ExitProfile&) = default;
};

struct ModelSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  ExitProfile exits;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int num_exits() const { return static_cast<int>(exits.size()); }

  // Layers executed by segment `exit`: (exit_layer[exit-1], exit_layer[exit]].
  int segment_first_layer(int exit) const {
    return exit == 0 ? 0 : exits.layer_indices[static_cast<std::size_t>(exit - 1)] + 1;
  }
  int segment_last_layer(int exit) const {
    return exits.layer_indices[static_cast<std::size_t>(exit)];
  }

  std::uint64_t total_macs() const {
    std::uint64_t total = 0;
    for (const auto& l : layers) total += l.macs();
    return total;
  }

  // MACs a single sample performs when it leaves at `exit`.
  std::uint64_t macs_to_exit(int exit) const {
    std::uint64_t total = 0;
    for (int l = 0; l <= segment_last_layer(exit); ++l) total += layers[static_cast<std::size_t>(l)].macs();
    return total;
  }

  void validate() const {
    if (layers.empty()) throw InvalidArgument("model '" + name + "' has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].index != static_cast<int>(i)) {
        throw InvalidArgument("layer indices must be dense and 0-based");
      }
      layers[i].validate();
    }
    exits.validate(num_layers());
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ArrivalTrace {
  std::vector<double> arrival_times;  // seconds
  std::vector<SampleId> sample_ids;
  std::vector<int> assigned_exits;    // empty until assign_exits runs

  std::size_t size() const { return arrival_times.size(); }
};

inline ArrivalTrace gen_poisson_arrivals(double rate, std::size_t n_samples, std::uint64_t seed) {
  if (!(rate > 0.0)) throw InvalidArgument("arrival rate must be positive");
  if (n_samples == 0) throw InvalidArgument("n_samples must be at least 1");
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  ArrivalTrace trace;
  trace.arrival_times.reserve(n_samples);
  trace.sample_ids.reserve(n_samples);
  double t = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    t += gap(rng);
    trace.arrival_times.push_back(t);
    trace.sample_ids.push_back(static_cast<SampleId>(i));
  }
  return trace;
}

inline ArrivalTrace assign_exits(ArrivalTrace trace, const ExitProfile& profile, std::uint64_t seed) {
  profile.validate_rates();
  // Separate stream from the arrival generator so exit outcomes do not depend
  // on how arrivals were drawn.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::discrete_distribution<int> pick(profile.rates.begin(), profile.rates.end());
  trace.assigned_exits.resize(trace.size());
  for (auto& e : trace.assigned_exits) e = pick(rng);
  return trace;
}

struct ExitPlacement {
  std::vector<int> layer_indices;
  std::vector<std::string> warnings;
};

// Places `n_intermediate` exits so that exit i follows the first layer whose
// cumulative MAC count reaches i/(n+1) of the total. Intermediate exits never
// share a layer and never sit on the final layer; a colliding exit moves one
// layer later, and is dropped (with a warning) when no room is left.
inline ExitPlacement place_exits_equidistant(const std::vector<LayerSpec>& layers, int n_intermediate) {
  if (n_intermediate < 1) throw InvalidArgument("need at least one intermediate exit");
  const int num_layers = static_cast<int>(layers.size());
  if (num_layers < n_intermediate + 1) {
    throw InvalidArgument("model has " + std::to_string(num_layers) + " layers, fewer than the " +
                          std::to_string(n_intermediate + 1) + " requested exits");
  }
  std::uint64_t total = 0;
  for (const auto& l : layers) total += l.macs();
  const auto parts = static_cast<std::uint64_t>(n_intermediate + 1);

  ExitPlacement out;
  std::uint64_t cumulative = 0;
  int layer = 0;
  const int last_intermediate_slot = num_layers - 2;
  for (int i = 1; i <= n_intermediate; ++i) {
    const std::uint64_t target = static_cast<std::uint64_t>(i) * total;
    while (layer < num_layers && (cumulative + layers[static_cast<std::size_t>(layer)].macs()) * parts < target) {
      cumulative += layers[static_cast<std::size_t>(layer)].macs();
      ++layer;
    }
    int where = std::min(layer, last_intermediate_slot);
    if (!out.layer_indices.empty() && where <= out.layer_indices.back()) {
      where = out.layer_indices.back() + 1;
    }
    if (where > last_intermediate_slot) {
      out.warnings.push_back("exit " + std::to_string(i) + " dropped: no free layer before the final exit");
      continue;
    }
    out.layer_indices.push_back(where);
  }
  out.layer_indices.push_back(num_layers - 1);
  return out;
}

}  // namespace fluidb
