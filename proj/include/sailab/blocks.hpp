#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sailab/tensor.hpp"

namespace sailab {

enum class BlockKind { weight, bias, embedding, norm_gain, norm_shift, head };

inline const char* block_kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::weight: return "weight";
    case BlockKind::bias: return "bias";
    case BlockKind::embedding: return "embedding";
    case BlockKind::norm_gain: return "norm_gain";
    case BlockKind::norm_shift: return "norm_shift";
    case BlockKind::head: return "head";
  }
  return "?";
}

// One named parameter tensor with its gradient. The unit of all block-wise
// bookkeeping; names are unique within a model and stable across runs.
template <class S>
struct ParamBlock {
  std::string name;
  BlockKind kind = BlockKind::weight;
  int layer_index = -1;  // -1: not tied to a layer
  Tensor<S> value;
  Tensor<S> grad;

  int64_t numel() const { return value.numel(); }
};

enum class PartitionMode { Default, Mini };

// A contiguous element range of one parameter tensor. Default partition uses
// whole tensors; Mini additionally slices fused attention qkv weights per
// head and flags embedding/head tensors for element-wise adaptive state.
struct BlockRef {
  int block = 0;
  int64_t offset = 0;
  int64_t count = 0;
  std::string name;
  bool elementwise_v = false;
};

struct PartitionSpec {
  PartitionMode mode = PartitionMode::Default;
  std::vector<BlockRef> blocks;
  int64_t total_params = 0;

  int64_t block_count() const { return static_cast<int64_t>(blocks.size()); }
};

template <class S>
std::span<const S> grad_view(const std::vector<ParamBlock<S>>& blocks, const BlockRef& ref) {
  return {blocks[ref.block].grad.data.data() + ref.offset, static_cast<size_t>(ref.count)};
}

template <class S>
std::span<S> value_view(std::vector<ParamBlock<S>>& blocks, const BlockRef& ref) {
  return {blocks[ref.block].value.data.data() + ref.offset, static_cast<size_t>(ref.count)};
}

}  // namespace sailab
