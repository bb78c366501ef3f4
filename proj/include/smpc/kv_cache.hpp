#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "smpc/ring.hpp"

namespace smpc {

// Cache misses for one attention head (token indices absent from the cache).
struct MissRequest {
  size_t layer = 0;
  size_t head = 0;
  std::vector<size_t> tokens;
};

// Per-party KV store over (layer, head, token) in shuffled head order.
// An entry is present iff its presence bit is set; values are this party's
// shares of the K and V rows (head_dim each).
class KVStore {
 public:
  KVStore() = default;
  KVStore(size_t layers, size_t heads, size_t head_dim);

  size_t head_dim() const { return head_dim_; }
  bool present(size_t layer, size_t head, size_t token) const;
  // Bitmap-only insertion (counting mode).
  void mark(size_t layer, size_t head, size_t token);
  void put(size_t layer, size_t head, size_t token, std::span<const Ring> k_row,
           std::span<const Ring> v_row);
  std::span<const Ring> k_row(size_t layer, size_t head, size_t token) const;
  std::span<const Ring> v_row(size_t layer, size_t head, size_t token) const;

  // Partition of the requested (head, token range) entries into present
  // entries and per-head miss requests. Read-only.
  struct LookupResult {
    size_t hits = 0;
    std::vector<MissRequest> misses;
  };
  LookupResult lookup(size_t layer, std::span<const size_t> heads, size_t token_end) const;

  // Miss count for one head over tokens [0, token_end): the head's L2/L1.
  size_t miss_count(size_t layer, size_t head, size_t token_end) const;

 private:
  size_t idx(size_t layer, size_t head) const { return layer * heads_ + head; }
  void ensure(size_t layer, size_t head, size_t token);

  size_t layers_ = 0, heads_ = 0, head_dim_ = 0;
  std::vector<std::vector<uint8_t>> presence_;       // [layer*heads][token]
  std::vector<std::vector<Ring>> k_data_, v_data_;   // [layer*heads][token*d]
};

// Deduplicated union batch driving a single sparse-QKV invocation.
struct MergedBatch {
  size_t layer = 0;
  std::vector<size_t> tokens;                         // ascending union
  std::map<size_t, std::vector<size_t>> per_head;     // head -> its tokens
};

// Merge miss requests of one layer: per-head token sets deduplicated, union
// token set computed. Mixed layers are a contract error.
MergedBatch merge_requests(std::span<const MissRequest> misses);

// Cost-benefit prefetch policy. x = elements per token vector, w = elements
// per head weight matrix. A not-activated head with l2 misses is worth
// prefetching iff l2 > w/x + max(0, l2 - l1); evaluated exactly in integers.
struct PrefetchPolicy {
  uint64_t w = 0;
  uint64_t x = 0;
};

bool prefetch_worthwhile(const PrefetchPolicy& policy, uint64_t l2, uint64_t l1);

// Heads (among the given non-activated heads' miss counts) selected for
// prefetching given l1 = max misses among activated heads in the batch.
std::vector<size_t> prefetch_select(const std::map<size_t, uint64_t>& miss_counts, uint64_t l1,
                                    const PrefetchPolicy& policy);

}  // namespace smpc
