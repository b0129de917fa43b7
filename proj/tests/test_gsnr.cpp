#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "sailab/gsnr.hpp"
#include "sailab/models.hpp"
#include "sailab/rng.hpp"

using namespace sailab;

namespace {

// independent naive two-pass reference
GsnrStats reference_stats(const std::vector<double>& g, double eps) {
  GsnrStats s;
  double sumsq = 0;
  for (double v : g) sumsq += v * v;
  s.g_norm = std::sqrt(sumsq);
  double mean = 0;
  for (double v : g) mean += v;
  mean /= static_cast<double>(g.size());
  double var = 0;
  for (double v : g) var += (v - mean) * (v - mean);
  var /= static_cast<double>(g.size());
  s.g_var = var;
  s.g_snr = s.g_norm == 0.0 ? 0.0 : s.g_norm / (std::sqrt(var) + eps);
  return s;
}

GsnrStats stats_of(std::vector<double> g, double eps = 1e-8) {
  return block_stats<double>(std::span<const double>(g.data(), g.size()), eps);
}

}  // namespace

TEST_CASE("block_stats: [3,4] oracle") {
  auto s = stats_of({3, 4});
  CHECK(s.g_norm == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(s.g_var == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(s.g_snr == doctest::Approx(5.0 / (0.5 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("block_stats: zero-variance block has SNR = norm/eps") {
  auto s = stats_of({2, 2, 2, 2});
  CHECK(s.g_norm == 4.0);
  CHECK(s.g_var == 0.0);
  CHECK(s.g_snr == 4.0 / 1e-8);
}

TEST_CASE("block_stats: all-zero gradient") {
  auto s = stats_of({0, 0, 0});
  CHECK(s.g_norm == 0.0);
  CHECK(s.g_var == 0.0);
  CHECK(s.g_snr == 0.0);
}

TEST_CASE("block_stats rejects empty blocks and bad eps") {
  std::vector<double> empty;
  CHECK_THROWS_AS(block_stats<double>(std::span<const double>(empty.data(), 0), 1e-8),
                  std::invalid_argument);
  std::vector<double> g = {1.0};
  CHECK_THROWS_AS(block_stats<double>(std::span<const double>(g.data(), 1), 0.0),
                  std::invalid_argument);
}

TEST_CASE("block_stats matches the naive reference over random blocks") {
  SeededRng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    auto n = static_cast<int64_t>(1 + rng.uniform_int(4096));
    std::vector<double> g(static_cast<size_t>(n));
    double offset = 10.0 * rng.normal();
    for (auto& v : g) v = offset + rng.normal();
    auto fast = stats_of(g);
    auto ref = reference_stats(g, 1e-8);
    CHECK(std::abs(fast.g_norm - ref.g_norm) <= 1e-12 * std::max(1.0, ref.g_norm));
    CHECK(std::abs(fast.g_var - ref.g_var) <= 1e-12 * std::max(1.0, ref.g_var));
    CHECK(std::abs(fast.g_snr - ref.g_snr) <= 1e-12 * std::max(1.0, ref.g_snr));
  }
}

TEST_CASE("block_stats: sign and permutation invariance, positive homogeneity") {
  SeededRng rng(32);
  std::vector<double> g(257);
  for (auto& v : g) v = rng.normal() + 0.3;

  auto base = stats_of(g);

  auto neg = g;
  for (auto& v : neg) v = -v;
  auto s_neg = stats_of(neg);
  CHECK(s_neg.g_norm == base.g_norm);
  CHECK(s_neg.g_var == base.g_var);
  CHECK(s_neg.g_snr == base.g_snr);

  // permutation changes only the float accumulation order, so the stats
  // agree to roundoff rather than bitwise
  auto perm = g;
  std::reverse(perm.begin(), perm.end());
  auto s_perm = stats_of(perm);
  CHECK(s_perm.g_norm == doctest::Approx(base.g_norm).epsilon(1e-13));
  CHECK(s_perm.g_var == doctest::Approx(base.g_var).epsilon(1e-13));
  CHECK(s_perm.g_snr == doctest::Approx(base.g_snr).epsilon(1e-13));

  auto scaled = g;
  for (auto& v : scaled) v *= 37.5;
  auto s_scaled = stats_of(scaled);
  CHECK(std::abs(s_scaled.g_snr - base.g_snr) / base.g_snr < 1e-6);
}

TEST_CASE("normalize: division by the max") {
  std::vector<GsnrStats> stats(3);
  stats[0].block_name = "a";
  stats[0].g_snr = 10;
  stats[1].block_name = "b";
  stats[1].g_snr = 5;
  stats[2].block_name = "c";
  stats[2].g_snr = 0;
  auto t = normalize(stats);
  CHECK(t.scales == std::vector<double>{1.0, 0.5, 0.0});
  CHECK(!t.degenerate);
  CHECK(t.scale_for("b") == 0.5);
}

TEST_CASE("normalize: single block self-normalizes to 1") {
  std::vector<GsnrStats> stats(1);
  stats[0].g_snr = 4e8;
  auto t = normalize(stats);
  CHECK(t.scales[0] == 1.0);
}

TEST_CASE("normalize: degenerate all-zero falls back to ones with a warning") {
  std::vector<GsnrStats> stats(2);
  auto t = normalize(stats);
  CHECK(t.degenerate);
  CHECK(t.scales == std::vector<double>{1.0, 1.0});
}

TEST_CASE("normalize: property over random stat sets") {
  SeededRng rng(33);
  for (int trial = 0; trial < 500; ++trial) {
    auto n = 1 + rng.uniform_int(17);
    std::vector<GsnrStats> stats(n);
    for (auto& s : stats) s.g_snr = rng.uniform() < 0.1 ? 0.0 : std::exp(6.0 * rng.normal());
    auto t = normalize(stats);
    double max_snr = 0;
    for (auto& s : stats) max_snr = std::max(max_snr, s.g_snr);
    int exact_ones = 0;
    for (size_t i = 0; i < t.scales.size(); ++i) {
      CHECK(t.scales[i] >= 0.0);
      CHECK(t.scales[i] <= 1.0);
      if (max_snr > 0 && stats[i].g_snr == max_snr) {
        CHECK(t.scales[i] == 1.0);  // argmax lands exactly on 1
      }
      if (t.scales[i] == 1.0) ++exact_ones;
    }
    CHECK(exact_ones >= 1);
  }
}

TEST_CASE("normalize rejects an empty list") {
  CHECK_THROWS_AS(normalize({}), std::invalid_argument);
}

TEST_CASE("compute_scales: two-block oracle") {
  std::vector<ParamBlock<double>> blocks(2);
  blocks[0].name = "w0";
  blocks[0].value = Tensor<double>::zeros({2});
  blocks[0].grad = Tensor<double>({2}, {3, 4});
  blocks[1].name = "w1";
  blocks[1].value = Tensor<double>::zeros({2});
  blocks[1].grad = Tensor<double>({2}, {1, 2});
  PartitionSpec p;
  p.blocks = {{0, 0, 2, "w0", false}, {1, 0, 2, "w1", false}};
  p.total_params = 4;
  auto t = compute_scales(blocks, p, 1e-8);
  CHECK(t.scales[0] == 1.0);
  CHECK(t.scales[1] == doctest::Approx(0.44721359549995793).epsilon(1e-9));
}

TEST_CASE("trace: stride arithmetic and frozen-model constancy") {
  SeededRng rng(34);
  auto m = build_mlp<double>({2, {4}, 2, Activation::relu}, rng);
  auto part = default_partition(m);
  DatasetSpec ds;
  ds.kind = DatasetKind::blobs;
  ds.size = 16;
  auto data = synth_dataset<double>(ds, 2);
  GsnrTrace trace;
  trace.stride = 10;
  for (int64_t step = 1; step <= 500; ++step) {
    auto batch = take_batch(data, 0, 16);  // same batch, lr = 0: nothing moves
    m.forward_loss(batch, true);
    if ((step - 1) % 10 == 0) record_trace(trace, step, m.blocks(), part);
  }
  CHECK(trace.sample_count() == 50);
  bool constant = true;
  for (size_t b = 0; b < trace.block_names.size(); ++b) {
    for (int64_t t = 1; t < trace.sample_count(); ++t) {
      constant = constant && trace.samples[t][b].g_snr == trace.samples[0][b].g_snr;
    }
  }
  CHECK(constant);
  auto rep = stability_report(trace);
  for (double cv : rep.cv) CHECK(cv == 0.0);
}

TEST_CASE("trace CSV round-trips losslessly") {
  GsnrTrace trace;
  trace.stride = 5;
  trace.block_names = {"a", "b"};
  SeededRng rng(35);
  for (int t = 0; t < 12; ++t) {
    trace.steps.push_back(1 + 5 * t);
    std::vector<GsnrStats> row(2);
    for (size_t b = 0; b < 2; ++b) {
      row[b].block_name = trace.block_names[b];
      row[b].g_norm = std::exp(rng.normal());
      row[b].g_var = std::exp(rng.normal());
      row[b].g_snr = row[b].g_norm / (std::sqrt(row[b].g_var) + 1e-8);
    }
    trace.samples.push_back(std::move(row));
  }
  auto csv = trace_to_csv(trace);
  auto back = trace_from_csv(csv);
  CHECK(back.block_names == trace.block_names);
  CHECK(back.steps == trace.steps);
  CHECK(back.stride == trace.stride);
  REQUIRE(back.samples.size() == trace.samples.size());
  for (size_t t = 0; t < trace.samples.size(); ++t) {
    for (size_t b = 0; b < 2; ++b) {
      CHECK(back.samples[t][b].g_norm == trace.samples[t][b].g_norm);
      CHECK(back.samples[t][b].g_var == trace.samples[t][b].g_var);
      CHECK(back.samples[t][b].g_snr == trace.samples[t][b].g_snr);
    }
  }
  CHECK(trace_to_csv(back) == csv);
}

TEST_CASE("stability_report: hand oracle for [9,10,11]") {
  GsnrTrace trace;
  trace.block_names = {"a"};
  for (double v : {9.0, 10.0, 11.0, 9.0, 10.0, 11.0, 9.0, 10.0, 11.0, 9.0, 10.0, 11.0}) {
    GsnrStats s;
    s.g_snr = v;
    trace.steps.push_back(static_cast<int64_t>(trace.steps.size()) + 1);
    trace.samples.push_back({s});
  }
  auto rep = stability_report(trace);
  CHECK(rep.cv[0] == doctest::Approx(std::sqrt(2.0 / 3.0) / 10.0).epsilon(1e-12));
}

TEST_CASE("stability_report needs at least 10 samples") {
  GsnrTrace trace;
  trace.block_names = {"a"};
  for (int t = 0; t < 9; ++t) {
    GsnrStats s;
    s.g_snr = 1.0;
    trace.steps.push_back(t);
    trace.samples.push_back({s});
  }
  CHECK_THROWS_AS(stability_report(trace), std::invalid_argument);
}

TEST_CASE("compute_scales is invariant to uniform gradient scaling") {
  SeededRng rng(36);
  std::vector<ParamBlock<double>> blocks(3);
  PartitionSpec p;
  for (int i = 0; i < 3; ++i) {
    blocks[i].name = "b" + std::to_string(i);
    blocks[i].value = Tensor<double>::zeros({16});
    blocks[i].grad = Tensor<double>::zeros({16});
    for (auto& g : blocks[i].grad.data) g = rng.normal() * (i + 1);
    p.blocks.push_back({i, 0, 16, blocks[i].name, false});
  }
  auto before = compute_scales(blocks, p);
  for (auto& b : blocks) {
    for (auto& g : b.grad.data) g *= 123.0;
  }
  auto after = compute_scales(blocks, p);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(after.scales[i] - before.scales[i]) <= 1e-6 * std::max(before.scales[i], 1e-12));
  }
}
