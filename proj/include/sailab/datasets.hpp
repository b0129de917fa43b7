#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "sailab/rng.hpp"
#include "sailab/tensor.hpp"

namespace sailab {

enum class DatasetKind { two_moons, blobs, copy_task };

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "two_moons") return DatasetKind::two_moons;
  if (s == "blobs") return DatasetKind::blobs;
  if (s == "copy_task") return DatasetKind::copy_task;
  throw ConfigError("unknown dataset kind: '" + s + "'");
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::blobs;
  int64_t size = 256;
  double noise = 0.1;
  double center = 5.0;   // blobs: centers at (+-center, 0)
  int64_t vocab = 8;     // copy_task
  int64_t length = 16;   // copy_task sequence length
};

template <class S>
struct Batch {
  Tensor<S> inputs;
  Tensor<S> targets;  // class ids (or token ids) stored as scalars
  int64_t size = 0;
};

template <class S>
struct Dataset {
  DatasetKind kind;
  Tensor<S> inputs;
  Tensor<S> targets;
  int64_t size = 0;
  int64_t num_classes = 2;
};

// Deterministic synthetic tasks. copy_task emits token sequences whose
// target at position t is the input token at t-1 (position 0 predicts
// itself), i.e. the sequence shifted by one for teacher forcing.
template <class S>
Dataset<S> synth_dataset(const DatasetSpec& spec, uint64_t seed) {
  if (spec.size < 1) throw std::invalid_argument("synth_dataset: size must be >= 1");
  SeededRng rng(seed);
  Dataset<S> ds;
  ds.kind = spec.kind;
  ds.size = spec.size;
  switch (spec.kind) {
    case DatasetKind::blobs: {
      ds.inputs = Tensor<S>::zeros({spec.size, 2});
      ds.targets = Tensor<S>::zeros({spec.size});
      for (int64_t i = 0; i < spec.size; ++i) {
        int64_t label = i % 2;
        double cx = label == 0 ? -spec.center : spec.center;
        ds.inputs.data[2 * i] = static_cast<S>(cx + spec.noise * rng.normal());
        ds.inputs.data[2 * i + 1] = static_cast<S>(spec.noise * rng.normal());
        ds.targets.data[i] = static_cast<S>(label);
      }
      ds.num_classes = 2;
      break;
    }
    case DatasetKind::two_moons: {
      ds.inputs = Tensor<S>::zeros({spec.size, 2});
      ds.targets = Tensor<S>::zeros({spec.size});
      for (int64_t i = 0; i < spec.size; ++i) {
        int64_t label = i % 2;
        double t = std::numbers::pi * rng.uniform();
        double x, y;
        if (label == 0) {
          x = std::cos(t);
          y = std::sin(t);
        } else {
          x = 1.0 - std::cos(t);
          y = 0.5 - std::sin(t);
        }
        ds.inputs.data[2 * i] = static_cast<S>(x + spec.noise * rng.normal());
        ds.inputs.data[2 * i + 1] = static_cast<S>(y + spec.noise * rng.normal());
        ds.targets.data[i] = static_cast<S>(label);
      }
      ds.num_classes = 2;
      break;
    }
    case DatasetKind::copy_task: {
      ds.inputs = Tensor<S>::zeros({spec.size, spec.length});
      ds.targets = Tensor<S>::zeros({spec.size, spec.length});
      for (int64_t i = 0; i < spec.size; ++i) {
        for (int64_t t = 0; t < spec.length; ++t) {
          auto tok = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(spec.vocab)));
          ds.inputs.data[i * spec.length + t] = static_cast<S>(tok);
        }
        for (int64_t t = 0; t < spec.length; ++t) {
          int64_t src = t == 0 ? 0 : t - 1;
          ds.targets.data[i * spec.length + t] = ds.inputs.data[i * spec.length + src];
        }
      }
      ds.num_classes = spec.vocab;
      break;
    }
  }
  return ds;
}

// Batches cycle through the dataset in order; step k deterministically maps
// to rows [k*bs, (k+1)*bs) modulo the dataset size.
template <class S>
Batch<S> take_batch(const Dataset<S>& ds, int64_t step, int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("take_batch: batch size must be >= 1");
  int64_t row_len = ds.inputs.numel() / ds.size;
  int64_t tgt_len = ds.targets.numel() / ds.size;
  Batch<S> b;
  b.size = batch_size;
  auto in_shape = ds.inputs.shape;
  in_shape[0] = batch_size;
  auto tg_shape = ds.targets.shape;
  tg_shape[0] = batch_size;
  b.inputs = Tensor<S>::zeros(in_shape);
  b.targets = Tensor<S>::zeros(tg_shape);
  for (int64_t r = 0; r < batch_size; ++r) {
    int64_t src = (step * batch_size + r) % ds.size;
    std::copy_n(ds.inputs.data.data() + src * row_len, row_len, b.inputs.data.data() + r * row_len);
    std::copy_n(ds.targets.data.data() + src * tgt_len, tgt_len, b.targets.data.data() + r * tgt_len);
  }
  return b;
}

}  // namespace sailab
