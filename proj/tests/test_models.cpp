#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <set>

#include "sailab/gradcheck.hpp"
#include "sailab/models.hpp"

using namespace sailab;

TEST_CASE("mlp builder: block names, count, and parameter total") {
  SeededRng rng(1);
  auto m = build_mlp<double>({2, {16}, 2, Activation::relu}, rng);
  REQUIRE(m.blocks().size() == 4);
  CHECK(m.blocks()[0].name == "layer.0.weight");
  CHECK(m.blocks()[1].name == "layer.0.bias");
  CHECK(m.blocks()[2].name == "layer.1.weight");
  CHECK(m.blocks()[3].name == "layer.1.bias");
  CHECK(m.total_params() == 2 * 16 + 16 + 16 * 2 + 2);  // 82
  for (double v : m.blocks()[1].value.data) CHECK(v == 0.0);
}

TEST_CASE("mlp builder: empty hidden dims is a single linear layer") {
  SeededRng rng(1);
  auto m = build_mlp<double>({2, {}, 2, Activation::relu}, rng);
  CHECK(m.blocks().size() == 2);
}

TEST_CASE("mlp builder: same seed gives bit-identical blocks") {
  SeededRng r1(5), r2(5);
  auto a = build_mlp<double>({2, {16}, 2, Activation::relu}, r1);
  auto b = build_mlp<double>({2, {16}, 2, Activation::relu}, r2);
  for (size_t i = 0; i < a.blocks().size(); ++i) {
    const auto& da = a.blocks()[i].value.data;
    const auto& db = b.blocks()[i].value.data;
    CHECK(std::memcmp(da.data(), db.data(), da.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("mlp builder rejects invalid dims") {
  SeededRng rng(1);
  CHECK_THROWS_AS(build_mlp<double>({0, {4}, 2, Activation::relu}, rng), std::invalid_argument);
  CHECK_THROWS_AS(build_mlp<double>({2, {0}, 2, Activation::relu}, rng), std::invalid_argument);
}

TEST_CASE("transformer builder: 29 blocks for the 2-layer example") {
  SeededRng rng(2);
  auto m = build_tiny_transformer<double>({64, 32, 32, 2, 2, 4}, rng);
  CHECK(m.blocks().size() == 2 + 2 * 12 + 2 + 1);  // 29
  std::set<std::string> names;
  for (const auto& b : m.blocks()) names.insert(b.name);
  CHECK(names.size() == m.blocks().size());  // unique
  CHECK(names.count("blocks.0.attn.qkv.weight") == 1);
  CHECK(names.count("head.weight") == 1);
}

TEST_CASE("transformer builder rejects indivisible heads") {
  SeededRng rng(2);
  CHECK_THROWS_AS(build_tiny_transformer<double>({64, 32, 32, 3, 2, 4}, rng), std::invalid_argument);
}

TEST_CASE("transformer: minimal model yields a finite loss") {
  SeededRng rng(3);
  auto m = build_tiny_transformer<double>({16, 8, 16, 2, 1, 4}, rng);
  DatasetSpec ds;
  ds.kind = DatasetKind::copy_task;
  ds.size = 4;
  ds.vocab = 16;
  ds.length = 8;
  auto data = synth_dataset<double>(ds, 11);
  auto res = m.forward_loss(take_batch(data, 0, 4), true);
  CHECK(std::isfinite(res.loss));
  bool any_nonzero = false;
  for (const auto& b : m.blocks()) {
    for (double g : b.grad.data) any_nonzero = any_nonzero || g != 0.0;
  }
  CHECK(any_nonzero);
}

TEST_CASE("default partition: one block per tensor, ordering preserved") {
  SeededRng rng(4);
  auto mlp = build_mlp<double>({2, {16}, 2, Activation::relu}, rng);
  auto p = default_partition(mlp);
  CHECK(p.blocks.size() == 4);
  CHECK(p.total_params == 82);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    CHECK(p.blocks[i].name == mlp.blocks()[i].name);
    CHECK(p.blocks[i].offset == 0);
    CHECK(p.blocks[i].count == mlp.blocks()[i].numel());
  }

  auto tf = build_tiny_transformer<double>({64, 32, 32, 2, 2, 4}, rng);
  CHECK(default_partition(tf).blocks.size() == 29);
}

TEST_CASE("single-tensor model partitions to B=1") {
  SeededRng rng(4);
  auto m = build_mlp<double>({3, {}, 2, Activation::relu}, rng);
  m.blocks().pop_back();  // drop the bias, leaving one tensor
  CHECK(default_partition(m).blocks.size() == 1);
}

TEST_CASE("mini partition: per-head q/k splits replace their share of qkv") {
  SeededRng rng(5);
  auto tf = build_tiny_transformer<double>({64, 32, 32, 2, 2, 4}, rng);
  auto dflt = default_partition(tf);
  auto mini = mini_partition(tf);
  // per layer: qkv (1 ref) becomes 2 Q + 2 K + 1 V = 5 refs
  CHECK(mini.blocks.size() == dflt.blocks.size() + 2 * 4);
  int q_blocks = 0, k_blocks = 0, v_blocks = 0;
  for (const auto& ref : mini.blocks) {
    if (ref.name.find(".q.h") != std::string::npos) ++q_blocks;
    if (ref.name.find(".k.h") != std::string::npos) ++k_blocks;
    if (ref.name.find("qkv.weight.v") != std::string::npos) ++v_blocks;
  }
  CHECK(q_blocks == 4);  // 2 heads x 2 layers
  CHECK(k_blocks == 4);
  CHECK(v_blocks == 2);
  // embedding and head tensors are flagged element-wise, nothing else
  for (const auto& ref : mini.blocks) {
    bool emb = ref.name == "tok_emb.weight" || ref.name == "pos_emb.weight" || ref.name == "head.weight";
    CHECK(ref.elementwise_v == emb);
  }
}

TEST_CASE("mini partition of an mlp is the default partition") {
  SeededRng rng(6);
  auto mlp = build_mlp<double>({2, {16}, 2, Activation::relu}, rng);
  auto mini = mini_partition(mlp);
  auto dflt = default_partition(mlp);
  CHECK(mini.blocks.size() == dflt.blocks.size());
  for (const auto& ref : mini.blocks) CHECK(ref.elementwise_v == false);
}

TEST_CASE("partition coverage: refs are disjoint and sum to d") {
  SeededRng rng(7);
  auto tf = build_tiny_transformer<double>({32, 16, 32, 4, 2, 4}, rng);
  for (auto mode : {PartitionMode::Default, PartitionMode::Mini}) {
    auto p = mode == PartitionMode::Default ? default_partition(tf) : mini_partition(tf);
    int64_t covered = 0;
    std::vector<std::set<int64_t>> seen(tf.blocks().size());
    bool overlap = false;
    for (const auto& ref : p.blocks) {
      covered += ref.count;
      for (int64_t j = ref.offset; j < ref.offset + ref.count; ++j) {
        overlap = overlap || !seen[ref.block].insert(j).second;
      }
    }
    CHECK(!overlap);
    CHECK(covered == tf.total_params());
    CHECK(p.total_params == tf.total_params());
  }
}

TEST_CASE("block name snapshot is stable for a fixed spec") {
  SeededRng rng(8);
  auto tf = build_tiny_transformer<double>({16, 8, 16, 2, 1, 4}, rng);
  std::vector<std::string> expected = {
      "tok_emb.weight", "pos_emb.weight",
      "blocks.0.norm1.gain", "blocks.0.norm1.shift",
      "blocks.0.attn.qkv.weight", "blocks.0.attn.qkv.bias",
      "blocks.0.attn.proj.weight", "blocks.0.attn.proj.bias",
      "blocks.0.norm2.gain", "blocks.0.norm2.shift",
      "blocks.0.mlp.fc.weight", "blocks.0.mlp.fc.bias",
      "blocks.0.mlp.proj.weight", "blocks.0.mlp.proj.bias",
      "final_norm.gain", "final_norm.shift", "head.weight"};
  REQUIRE(tf.blocks().size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) CHECK(tf.blocks()[i].name == expected[i]);
}

TEST_CASE("forward_loss: uniform logits give ln(C)") {
  SeededRng rng(9);
  auto m = build_mlp<double>({2, {}, 4, Activation::relu}, rng);
  // zero weights and bias -> identical logits -> maximum-entropy loss
  for (auto& b : m.blocks()) std::fill(b.value.data.begin(), b.value.data.end(), 0.0);
  DatasetSpec ds;
  ds.kind = DatasetKind::blobs;
  ds.size = 8;
  auto data = synth_dataset<double>(ds, 1);
  for (auto& t : data.targets.data) t = std::min(t, 3.0);
  auto res = m.forward_loss(take_batch(data, 0, 8), false);
  CHECK(res.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("untrained copy-task loss sits within 2% of ln(vocab)") {
  SeededRng rng(10);
  auto m = build_tiny_transformer<double>({64, 32, 32, 2, 2, 4}, rng);
  DatasetSpec ds;
  ds.kind = DatasetKind::copy_task;
  ds.size = 16;
  ds.vocab = 64;
  ds.length = 32;
  auto data = synth_dataset<double>(ds, 3);
  auto res = m.forward_loss(take_batch(data, 0, 16), false);
  CHECK(res.loss == doctest::Approx(std::log(64.0)).epsilon(0.02));
}

TEST_CASE("separable two-point dataset trains to near-zero loss") {
  SeededRng rng(12);
  auto m = build_mlp<double>({2, {8}, 2, Activation::relu}, rng);
  Batch<double> b;
  b.size = 2;
  b.inputs = Tensor<double>({2, 2}, {-1.0, 0.0, 1.0, 0.0});
  b.targets = Tensor<double>({2}, {0.0, 1.0});
  double loss = 0;
  for (int step = 0; step < 2000; ++step) {
    auto res = m.forward_loss(b, true);
    loss = res.loss;
    for (auto& blk : m.blocks()) {
      for (size_t j = 0; j < blk.value.data.size(); ++j) blk.value.data[j] -= 0.5 * blk.grad.data[j];
    }
  }
  CHECK(loss < 0.01);
}

TEST_CASE("model gradients pass the finite-difference oracle") {
  SeededRng rng(13);
  auto m = build_mlp<double>({2, {8}, 2, Activation::relu}, rng);
  DatasetSpec ds;
  ds.kind = DatasetKind::blobs;
  ds.size = 8;
  auto data = synth_dataset<double>(ds, 5);
  auto batch = take_batch(data, 0, 8);
  m.forward_loss(batch, true);
  for (auto& blk : m.blocks()) {
    auto f = [&] { return m.forward_loss(batch, false).loss; };
    double err = finite_difference_check(f, blk.value, blk.grad, 1e-5);
    CAPTURE(blk.name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("synth_dataset: blobs are separable and deterministic") {
  DatasetSpec ds;
  ds.kind = DatasetKind::blobs;
  ds.size = 64;
  ds.noise = 0.1;
  ds.center = 5.0;
  auto a = synth_dataset<double>(ds, 42);
  auto b = synth_dataset<double>(ds, 42);
  CHECK(a.inputs.data == b.inputs.data);
  for (int64_t i = 0; i < ds.size; ++i) {
    double x = a.inputs.data[2 * i];
    double label = a.targets.data[i];
    CHECK((label == 0.0 ? x < 0 : x > 0));
  }
}

TEST_CASE("synth_dataset: copy task targets are the inputs shifted by one") {
  DatasetSpec ds;
  ds.kind = DatasetKind::copy_task;
  ds.size = 8;
  ds.vocab = 8;
  ds.length = 16;
  auto d = synth_dataset<double>(ds, 9);
  for (int64_t i = 0; i < ds.size; ++i) {
    for (int64_t t = 1; t < ds.length; ++t) {
      CHECK(d.targets.data[i * ds.length + t] == d.inputs.data[i * ds.length + t - 1]);
    }
    CHECK(d.targets.data[i * ds.length] == d.inputs.data[i * ds.length]);
    for (int64_t t = 0; t < ds.length; ++t) {
      CHECK(d.inputs.data[i * ds.length + t] < 8.0);
    }
  }
}

TEST_CASE("synth_dataset rejects size < 1 and unknown kinds") {
  DatasetSpec ds;
  ds.size = 0;
  CHECK_THROWS_AS(synth_dataset<double>(ds, 1), std::invalid_argument);
  CHECK_THROWS_AS(parse_dataset_kind("spirals"), ConfigError);
}

TEST_CASE("blobs: a logistic model reaches 99% accuracy") {
  SeededRng rng(14);
  auto m = build_mlp<double>({2, {}, 2, Activation::relu}, rng);
  DatasetSpec ds;
  ds.kind = DatasetKind::blobs;
  ds.size = 128;
  auto data = synth_dataset<double>(ds, 21);
  for (int step = 0; step < 300; ++step) {
    auto batch = take_batch(data, step, 32);
    m.forward_loss(batch, true);
    for (auto& blk : m.blocks()) {
      for (size_t j = 0; j < blk.value.data.size(); ++j) blk.value.data[j] -= 0.1 * blk.grad.data[j];
    }
  }
  CHECK(m.evaluate_accuracy(data) >= 0.99);
}
