#include <gtest/gtest.h>

#include <random>

#include "fluidb/dse.hpp"
#include "fluidb/npu_model.hpp"
#include "fluidb/zoo.hpp"
#include "reference_model.hpp"

namespace fluidb {
namespace {

const LayerSpec kLayer{0, LayerKind::kConv, 196, 576, 128};

TEST(FluidDims, SingleSampleIsIdentity) {
  const auto d = fluid_dims(kLayer, 1, 1, 7);
  EXPECT_EQ(d.rows_hat, 196);
  EXPECT_EQ(d.reduction_hat, 576);
  EXPECT_EQ(d.cols, 128);
}

TEST(FluidDims, PureRowBatching) {
  const auto d = fluid_dims(kLayer, 4, 4, 7);
  EXPECT_EQ(d.rows_hat, 784);
  EXPECT_EQ(d.reduction_hat, 576);
}

TEST(FluidDims, HybridAddsGuards) {
  const auto d = fluid_dims(kLayer, 4, 2, 7);
  EXPECT_EQ(d.rows_hat, 392);
  EXPECT_EQ(d.reduction_hat, 1734);
  EXPECT_EQ(d.useful_macs, 4ULL * kLayer.macs());
}

TEST(FluidDims, StrictModeAlwaysPads) {
  EXPECT_EQ(fluid_dims(kLayer, 4, 4, 7, GuardPadding::kAlways).reduction_hat, 578);
  EXPECT_EQ(fluid_dims(kLayer, 4, 4, 7, GuardPadding::kMultiSampleOnly).reduction_hat, 576);
}

TEST(FluidDims, RejectsOutOfRangeRowBatch) {
  EXPECT_THROW(fluid_dims(kLayer, 4, 0, 7), InvalidPolicy);
  EXPECT_THROW(fluid_dims(kLayer, 4, 5, 7), InvalidPolicy);
  EXPECT_THROW(fluid_dims(kLayer, 0, 1, 7), InvalidPolicy);
}

TEST(FluidDims, PropertyConservationAndSpecialCases) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const LayerSpec l{0, LayerKind::kConv, 1 + static_cast<std::int64_t>(rng() % 4000),
                      1 + static_cast<std::int64_t>(rng() % 5000), 1 + static_cast<std::int64_t>(rng() % 600)};
    const int b = 1 + static_cast<int>(rng() % 16);
    const int br = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(b));
    const std::int64_t tp = 1 + static_cast<std::int64_t>(rng() % 64);
    const LayerPolicy pol{br, Stacking::kOne};
    EXPECT_EQ(pol.row_batch + pol.reduction_batch(b) - 1, b);
    const auto d = fluid_dims(l, b, br, tp);
    EXPECT_EQ(d.rows_hat, br * l.rows);
    EXPECT_GE(d.reduction_hat, l.reduction);
    const auto r_uniform = fluid_dims(l, b, b, tp);
    EXPECT_EQ(r_uniform.rows_hat, b * l.rows);
    EXPECT_EQ(r_uniform.reduction_hat, l.reduction);
    const auto p_uniform = fluid_dims(l, b, 1, tp);
    EXPECT_EQ(p_uniform.rows_hat, l.rows);
    EXPECT_EQ(p_uniform.reduction_hat, b == 1 ? l.reduction : b * (l.reduction + l.reduction % tp));
  }
}

TEST(StackPes, Transforms) {
  const NpuDesign d = presets::zc706_resnet50();
  const NpuDesign two = stack_pes(d, Stacking::kTwo);
  EXPECT_EQ(two.tile_rows, 2326);
  EXPECT_EQ(two.tile_reduction, 14);
  EXPECT_EQ(two.tile_cols, 64);
  EXPECT_EQ(two.clock_hz, d.clock_hz);
  EXPECT_EQ(stack_pes(d, Stacking::kOne), d);
  EXPECT_THROW(stack_pes(d, Stacking::kHalf), UnsupportedStacking);
  const NpuDesign half = stack_pes(zc706().design(1024, 8, 100), Stacking::kHalf);
  EXPECT_EQ(half.tile_rows, 512);
  EXPECT_EQ(half.tile_reduction, 4);
  EXPECT_EQ(half.tile_cols, 200);
}

TEST(StackPes, FactorParsing) {
  EXPECT_EQ(stacking_from_double(0.5), Stacking::kHalf);
  EXPECT_EQ(stacking_from_double(2.0), Stacking::kTwo);
  EXPECT_THROW(stacking_from_double(3.0), InvalidArgument);
  EXPECT_EQ(stacking_from_string("1/2"), Stacking::kHalf);
  EXPECT_THROW(stacking_from_string("4"), InvalidArgument);
}

TEST(StackPes, NeverExceedsMacBudget) {
  for (std::int64_t tp = 1; tp <= 40; ++tp) {
    for (std::int64_t tc = 1; tc <= 300; tc += 7) {
      const NpuDesign d = zc706().design(64, tp, tc);
      for (Stacking k : kAllStackings) {
        if (!stacking_supported(d, k)) continue;
        const NpuDesign s = stack_pes(d, k);
        EXPECT_LE(s.tile_reduction * s.tile_cols, tp * tc);
      }
    }
  }
}

TEST(LayerLatency, SingleTile) {
  const NpuDesign d = zc706().design(64, 8, 32);
  const BatchedLayerDims dims{64, 8, 32, 64 * 8 * 32};
  EXPECT_EQ(compute_cycles(d, dims), 64 + 3 + 4);
  const BatchedLayerDims twice{128, 8, 32, 0};
  EXPECT_EQ(compute_cycles(d, twice) - pipeline_fill_cycles(8), 2 * (compute_cycles(d, dims) - pipeline_fill_cycles(8)));
}

TEST(LayerLatency, FrozenExampleFromOracle) {
  const NpuDesign d = presets::zc706_resnet50();
  const BatchedLayerDims dims{3136, 576, 128, 0};
  EXPECT_EQ(compute_cycles(d, dims), 386123);
  EXPECT_DOUBLE_EQ(memory_bytes(d, dims), 4562944.0);
  EXPECT_NEAR(layer_latency(d, dims), 2.57415333333e-3, 1e-14);
}

TEST(LayerLatency, MonotoneInEachDimension) {
  const NpuDesign d = zc706().design(512, 8, 64);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    const std::int64_t r = 1 + static_cast<std::int64_t>(rng() % 5000);
    const std::int64_t p = 1 + static_cast<std::int64_t>(rng() % 5000);
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng() % 500);
    const double base = layer_latency(d, {r, p, c, 0});
    EXPECT_LE(base, layer_latency(d, {r + 1, p, c, 0}));
    EXPECT_LE(base, layer_latency(d, {r, p + 1, c, 0}));
    EXPECT_LE(base, layer_latency(d, {r, p, c + 1, 0}));
  }
}

TEST(LayerLatency, MatchesReferenceImplementation) {
  std::mt19937_64 rng(77);
  const test::RefPlatform pl;
  for (int i = 0; i < 500; ++i) {
    const NpuDesign d = zc706().design(1 + static_cast<std::int64_t>(rng() % 4096), 1 + static_cast<std::int64_t>(rng() % 32),
                                       1 + static_cast<std::int64_t>(rng() % 256));
    const std::int64_t r = 1 + static_cast<std::int64_t>(rng() % 20000);
    const std::int64_t p = 1 + static_cast<std::int64_t>(rng() % 5000);
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng() % 2048);
    EXPECT_EQ(layer_latency(d, {r, p, c, 0}),
              test::ref_latency(r, p, c, {d.tile_rows, d.tile_reduction, d.tile_cols}, pl));
  }
}

TEST(Peak, Values) {
  EXPECT_DOUBLE_EQ(peak_performance(zc706().design(1, 7, 128)), 268.8);
  EXPECT_DOUBLE_EQ(peak_performance(zcu104().design(1, 10, 172)), 688.0);
  NpuDesign unit = zc706().design(1, 1, 1);
  unit.clock_hz = 1.0;
  EXPECT_DOUBLE_EQ(peak_ops_per_s(unit), 2.0);
}

TEST(LayerThroughput, RooflineBound) {
  const NpuDesign d = zc706().design(512, 8, 64);
  const ModelSpec m = zoo::resnet50_4exit();
  for (const auto& l : m.layers) {
    for (int b = 1; b <= 8; ++b) {
      for (int br = 1; br <= b; ++br) {
        for (Stacking k : kAllStackings) {
          if (!stacking_supported(d, k)) continue;
          EXPECT_LE(layer_throughput(d, l, b, {br, k}), peak_performance(stack_pes(d, k)) * (1 + 1e-12));
        }
      }
    }
  }
}

TEST(LayerThroughput, SingleTileArithmetic) {
  const NpuDesign d = zc706().design(64, 8, 32);
  const LayerSpec l{0, LayerKind::kConv, 64, 8, 32};
  const double expected = 2.0 * 64 * 8 * 32 / ((64.0 + 7.0) / 150e6) / 1e9;
  EXPECT_DOUBLE_EQ(layer_throughput(d, l, 1, {1, Stacking::kOne}), expected);
}

TEST(LayerThroughput, NarrowLayerGainsFromStacking) {
  const NpuDesign d = zc706().design(512, 8, 64);
  const LayerSpec l{0, LayerKind::kConv, 512, 64, 32};
  EXPECT_GT(layer_throughput(d, l, 1, {1, Stacking::kTwo}), layer_throughput(d, l, 1, {1, Stacking::kOne}));
}

TEST(Fbcb, LookupAndBounds) {
  Fbcb f(10, 8);
  EXPECT_EQ(f.size(), 80U);
  f.set(5, 4, {2, Stacking::kTwo});
  const auto e = fbcb_lookup(f, 5, 4);
  EXPECT_EQ(e.row_batch, 2);
  EXPECT_EQ(e.reduction_batch, 3);
  EXPECT_EQ(e.stacking, Stacking::kTwo);
  EXPECT_THROW(f.at(10, 1), LookupError);
  EXPECT_THROW(f.at(0, 9), LookupError);
  EXPECT_THROW(f.at(0, 0), LookupError);
  EXPECT_THROW(f.set(0, 2, {3, Stacking::kOne}), InvalidPolicy);
}

TEST(Fbcb, BatchOneAlwaysSingleRow) {
  const Fbcb f = build_fbcb(presets::zc706_resnet50(), zoo::resnet50_4exit(), 8);
  for (int l = 0; l < f.num_layers(); ++l) {
    const auto e = fbcb_lookup(f, l, 1);
    EXPECT_EQ(e.row_batch, 1);
    EXPECT_EQ(e.reduction_batch, 1);
  }
}

TEST(Fbcb, SizeBits) {
  EXPECT_EQ(fbcb_size_bits(53, 8), 2120U);
  EXPECT_EQ(fbcb_size_bits(1, 1), 2U);
  EXPECT_EQ(fbcb_size_bits(1, 8), 8U * (3 + 2));
  EXPECT_EQ(fbcb_size_bits(1, 9), 9U * (4 + 2));
  EXPECT_THROW(fbcb_size_bits(0, 8), InvalidArgument);
}

ModelSpec four_layer_model() {
  ModelSpec m;
  m.name = "four";
  m.layers = {{0, LayerKind::kConv, 784, 288, 64},
              {1, LayerKind::kConv, 196, 576, 128},
              {2, LayerKind::kConv, 49, 1152, 256},
              {3, LayerKind::kFc, 1, 256, 10}};
  m.exits = {{1, 3}, {0.4, 0.6}};
  return m;
}

TEST(SegmentLatency, HandSummedLayers) {
  const NpuDesign d = zc706().design(512, 8, 64);
  const ModelSpec m = four_layer_model();
  const Fbcb f = build_fbcb(d, m, 4);
  auto layer = [&](int l) { return policy_layer_latency(d, m.layers[static_cast<std::size_t>(l)], 2, f.at(l, 2)); };
  EXPECT_DOUBLE_EQ(segment_latency(d, m, f, kFromStart, 0, 2), layer(0) + layer(1));
  EXPECT_DOUBLE_EQ(segment_latency(d, m, f, 0, 1, 2), layer(2) + layer(3));
  EXPECT_DOUBLE_EQ(segment_latency(d, m, f, kFromStart, 1, 2), layer(0) + layer(1) + layer(2) + layer(3));
  EXPECT_THROW(segment_latency(d, m, f, 1, 1, 2), LookupError);
  EXPECT_THROW(segment_latency(d, m, f, kFromStart, 2, 2), LookupError);
}

TEST(SegmentLatency, Additivity) {
  const NpuDesign d = zc706().design(256, 7, 128);
  const ModelSpec m = zoo::resnet50_4exit();
  const Fbcb f = build_fbcb(d, m, 8);
  for (int b = 1; b <= 8; ++b) {
    for (int j = 0; j < m.num_exits(); ++j) {
      for (int i = 0; i < j; ++i) {
        EXPECT_NEAR(segment_latency(d, m, f, kFromStart, j, b),
                    segment_latency(d, m, f, kFromStart, i, b) + segment_latency(d, m, f, i, j, b), 1e-15);
      }
    }
  }
}

TEST(LatencyLut, ShapeAndContents) {
  const NpuDesign d = zc706().design(512, 8, 64);
  const ModelSpec m = zoo::synthetic10();
  const Fbcb f = build_fbcb(d, m, 8);
  const LatencyLut lut = build_latency_lut(d, m, f, 8);
  EXPECT_EQ(lut.size(), 32U);
  EXPECT_NO_THROW(lut.validate());
  // Frozen from the oracle script.
  EXPECT_EQ(lut.at(0, 1).count(), 443840);
  EXPECT_EQ(lut.at(1, 1).count(), 983173);
  EXPECT_EQ(lut.at(2, 1).count(), 1106013);
  EXPECT_EQ(lut.at(3, 1).count(), 4065427);
  EXPECT_EQ(lut.at(0, 4).count(), 1672640);
  EXPECT_EQ(lut.at(1, 4).count(), 3379347);
  EXPECT_EQ(lut.at(2, 4).count(), 2211933);
  EXPECT_EQ(lut.at(3, 4).count(), 4065427);
  for (int b = 1; b <= 8; ++b) {
    EXPECT_NEAR(to_seconds(lut.span(0, 3, b)), segment_latency(d, m, f, kFromStart, 3, b), 2e-9);
  }
  EXPECT_THROW(lut.at(4, 1), LookupError);
}

TEST(LatencyLut, ValidateRejectsBadTables) {
  LatencyLut lut(1, 2);
  EXPECT_THROW(lut.validate(), ConfigError);
  lut.set(0, 1, Nanos{10});
  lut.set(0, 2, Nanos{9});
  EXPECT_THROW(lut.validate(), ConfigError);
}

TEST(NpuDesign, ShippedPresetFeasibility) {
  for (const auto& d : presets::all()) EXPECT_TRUE(d.feasible()) << d.name;
  EXPECT_EQ(presets::zc706_resnet50().dsp_usage(), 896);
  EXPECT_EQ(presets::zcu104_resnet50().dsp_usage(), 1720);
  EXPECT_EQ(presets::zc706_inception_v3().dsp_usage(), 900);
  NpuDesign over = presets::zc706_resnet50();
  over.tile_cols = 129;
  EXPECT_FALSE(over.feasible());
  EXPECT_THROW(over.validate(), InvalidArgument);
}

}  // namespace
}  // namespace fluidb
