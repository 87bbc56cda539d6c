#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluidb/common.hpp"
#include "fluidb/lowering.hpp"
#include "fluidb/npu_model.hpp"
#include "fluidb/workload.hpp"

namespace fluidb::io {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline json load_json(const std::filesystem::path& path) { return parse_json(read_file(path), path.string()); }

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

template <typename T>
T get_field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

// --- models ----------------------------------------------------------------

inline json to_json(const ModelSpec& m) {
  json layers = json::array();
  for (const auto& l : m.layers) {
    layers.push_back({{"index", l.index}, {"kind", to_string(l.kind)}, {"rows", l.rows},
                      {"reduction", l.reduction}, {"cols", l.cols}});
  }
  return {{"name", m.name},
          {"layers", layers},
          {"exits", {{"layers", m.exits.layer_indices}, {"rates", m.exits.rates}}}};
}

inline ModelSpec model_from_json(const json& j) {
  ModelSpec m;
  m.name = j.value("name", "");
  for (const auto& jl : get_field<json>(j, "layers")) {
    LayerSpec l;
    l.index = get_field<int>(jl, "index");
    const auto kind = get_field<std::string>(jl, "kind");
    if (kind == "conv") {
      l.kind = LayerKind::kConv;
    } else if (kind == "fc") {
      l.kind = LayerKind::kFc;
    } else {
      throw ConfigError("layer kind must be 'conv' or 'fc', got '" + kind + "'");
    }
    l.rows = get_field<std::int64_t>(jl, "rows");
    l.reduction = get_field<std::int64_t>(jl, "reduction");
    l.cols = get_field<std::int64_t>(jl, "cols");
    m.layers.push_back(l);
  }
  const auto exits = get_field<json>(j, "exits");
  m.exits.layer_indices = get_field<std::vector<int>>(exits, "layers");
  m.exits.rates = get_field<std::vector<double>>(exits, "rates");
  m.validate();
  return m;
}

// --- network descriptors ----------------------------------------------------

inline const char* to_string(NetLayer::Kind k) {
  switch (k) {
    case NetLayer::Kind::kConv: return "conv";
    case NetLayer::Kind::kFc: return "fc";
    case NetLayer::Kind::kPool: return "pool";
  }
  return "?";
}

inline json to_json(const NetDescriptor& net) {
  json layers = json::array();
  for (const auto& l : net.layers) {
    json jl{{"name", l.name}, {"kind", to_string(l.kind)}, {"c_in", l.c_in}, {"h_in", l.h_in}, {"w_in", l.w_in},
            {"c_out", l.c_out}, {"k_h", l.k_h}, {"k_w", l.k_w}, {"stride", l.stride}, {"pad_h", l.pad_h},
            {"pad_w", l.pad_w}};
    if (!l.inputs.empty()) jl["inputs"] = l.inputs;
    layers.push_back(std::move(jl));
  }
  return {{"name", net.name}, {"input", {net.input_c, net.input_h, net.input_w}}, {"layers", layers}};
}

inline NetDescriptor descriptor_from_json(const json& j) {
  NetDescriptor net;
  net.name = j.value("name", "");
  const auto input = get_field<std::vector<int>>(j, "input");
  if (input.size() != 3) throw InvalidDescriptor("input must be [channels, height, width]");
  net.input_c = input[0];
  net.input_h = input[1];
  net.input_w = input[2];
  for (const auto& jl : get_field<json>(j, "layers")) {
    NetLayer l;
    l.name = get_field<std::string>(jl, "name");
    const auto kind = get_field<std::string>(jl, "kind");
    if (kind == "conv") {
      l.kind = NetLayer::Kind::kConv;
    } else if (kind == "fc") {
      l.kind = NetLayer::Kind::kFc;
    } else if (kind == "pool") {
      l.kind = NetLayer::Kind::kPool;
    } else {
      throw InvalidDescriptor("unknown layer kind '" + kind + "'");
    }
    l.inputs = jl.value("inputs", std::vector<std::string>{});
    l.c_in = get_field<int>(jl, "c_in");
    l.h_in = jl.value("h_in", 1);
    l.w_in = jl.value("w_in", 1);
    l.c_out = jl.value("c_out", 0);
    l.k_h = jl.value("k_h", 1);
    l.k_w = jl.value("k_w", 1);
    l.stride = jl.value("stride", 1);
    l.pad_h = jl.value("pad_h", 0);
    l.pad_w = jl.value("pad_w", 0);
    net.layers.push_back(std::move(l));
  }
  return net;
}

// --- designs and tables -----------------------------------------------------

inline json to_json(const NpuDesign& d) {
  return {{"name", d.name},
          {"tile_rows", d.tile_rows},
          {"tile_reduction", d.tile_reduction},
          {"tile_cols", d.tile_cols},
          {"clock_hz", d.clock_hz},
          {"mem_bandwidth_bytes_per_s", d.mem_bandwidth_bytes_per_s},
          {"word_bytes", d.word_bytes},
          {"dsp_budget", d.dsp_budget},
          {"bram_budget_words", d.bram_budget_words}};
}

inline NpuDesign design_from_json(const json& j) {
  NpuDesign d;
  d.name = j.value("name", "");
  d.tile_rows = get_field<std::int64_t>(j, "tile_rows");
  d.tile_reduction = get_field<std::int64_t>(j, "tile_reduction");
  d.tile_cols = get_field<std::int64_t>(j, "tile_cols");
  d.clock_hz = get_field<double>(j, "clock_hz");
  d.mem_bandwidth_bytes_per_s = get_field<double>(j, "mem_bandwidth_bytes_per_s");
  d.word_bytes = get_field<std::int64_t>(j, "word_bytes");
  d.dsp_budget = get_field<std::int64_t>(j, "dsp_budget");
  d.bram_budget_words = get_field<std::int64_t>(j, "bram_budget_words");
  d.validate();
  return d;
}

// Rows are layers, columns batch sizes 1..B_max.
inline json to_json(const Fbcb& fbcb) {
  json rows = json::array();
  for (int l = 0; l < fbcb.num_layers(); ++l) {
    json row = json::array();
    for (int b = 1; b <= fbcb.b_max(); ++b) {
      const auto e = fbcb_lookup(fbcb, l, b);
      row.push_back({{"b_r", e.row_batch}, {"b_p", e.reduction_batch}, {"k", to_string(e.stacking)}});
    }
    rows.push_back(std::move(row));
  }
  return {{"num_layers", fbcb.num_layers()}, {"b_max", fbcb.b_max()}, {"size_bits",
          fbcb_size_bits(static_cast<std::uint64_t>(fbcb.num_layers()), static_cast<std::uint64_t>(fbcb.b_max()))},
          {"entries", rows}};
}

inline Fbcb fbcb_from_json(const json& j) {
  Fbcb fbcb(get_field<int>(j, "num_layers"), get_field<int>(j, "b_max"));
  const auto rows = get_field<json>(j, "entries");
  if (static_cast<int>(rows.size()) != fbcb.num_layers()) throw ConfigError("FBCB row count mismatch");
  for (int l = 0; l < fbcb.num_layers(); ++l) {
    const auto& row = rows[static_cast<std::size_t>(l)];
    if (static_cast<int>(row.size()) != fbcb.b_max()) throw ConfigError("FBCB column count mismatch");
    for (int b = 1; b <= fbcb.b_max(); ++b) {
      const auto& e = row[static_cast<std::size_t>(b - 1)];
      fbcb.set(l, b, {get_field<int>(e, "b_r"), stacking_from_string(get_field<std::string>(e, "k"))});
    }
  }
  return fbcb;
}

inline json to_json(const LatencyLut& lut) {
  json rows = json::array();
  for (int e = 0; e < lut.num_exits(); ++e) {
    json row = json::array();
    for (int b = 1; b <= lut.b_max(); ++b) row.push_back(lut.at(e, b).count());
    rows.push_back(std::move(row));
  }
  return {{"num_exits", lut.num_exits()}, {"b_max", lut.b_max()}, {"latency_ns", rows}};
}

// --- CSV --------------------------------------------------------------------

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw InvalidArgument("CSV row has the wrong number of cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i != 0) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

}  // namespace fluidb::io
