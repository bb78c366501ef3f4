#include "smpc/kv_cache.hpp"

#include <algorithm>
#include <set>

#include "smpc/error.hpp"

namespace smpc {

KVStore::KVStore(size_t layers, size_t heads, size_t head_dim)
    : layers_(layers), heads_(heads), head_dim_(head_dim) {
  presence_.resize(layers * heads);
  k_data_.resize(layers * heads);
  v_data_.resize(layers * heads);
}

bool KVStore::present(size_t layer, size_t head, size_t token) const {
  const auto& bits = presence_[idx(layer, head)];
  return token < bits.size() && bits[token];
}

void KVStore::ensure(size_t layer, size_t head, size_t token) {
  auto& bits = presence_[idx(layer, head)];
  if (bits.size() <= token) {
    bits.resize(token + 1, 0);
    k_data_[idx(layer, head)].resize((token + 1) * head_dim_, 0);
    v_data_[idx(layer, head)].resize((token + 1) * head_dim_, 0);
  }
}

void KVStore::mark(size_t layer, size_t head, size_t token) {
  ensure(layer, head, token);
  presence_[idx(layer, head)][token] = 1;
}

void KVStore::put(size_t layer, size_t head, size_t token, std::span<const Ring> k_row,
                  std::span<const Ring> v_row) {
  if (k_row.size() != head_dim_ || v_row.size() != head_dim_)
    throw ContractError("KVStore::put: row width mismatch");
  ensure(layer, head, token);
  const size_t i = idx(layer, head);
  std::copy(k_row.begin(), k_row.end(), k_data_[i].begin() + token * head_dim_);
  std::copy(v_row.begin(), v_row.end(), v_data_[i].begin() + token * head_dim_);
  presence_[i][token] = 1;
}

std::span<const Ring> KVStore::k_row(size_t layer, size_t head, size_t token) const {
  if (!present(layer, head, token)) throw ContractError("KVStore: reading absent K entry");
  return {k_data_[idx(layer, head)].data() + token * head_dim_, head_dim_};
}

std::span<const Ring> KVStore::v_row(size_t layer, size_t head, size_t token) const {
  if (!present(layer, head, token)) throw ContractError("KVStore: reading absent V entry");
  return {v_data_[idx(layer, head)].data() + token * head_dim_, head_dim_};
}

KVStore::LookupResult KVStore::lookup(size_t layer, std::span<const size_t> heads,
                                      size_t token_end) const {
  LookupResult res;
  for (size_t h : heads) {
    MissRequest req;
    req.layer = layer;
    req.head = h;
    for (size_t t = 0; t < token_end; ++t) {
      if (present(layer, h, t))
        ++res.hits;
      else
        req.tokens.push_back(t);
    }
    if (!req.tokens.empty()) res.misses.push_back(std::move(req));
  }
  return res;
}

size_t KVStore::miss_count(size_t layer, size_t head, size_t token_end) const {
  size_t c = 0;
  for (size_t t = 0; t < token_end; ++t)
    if (!present(layer, head, t)) ++c;
  return c;
}

MergedBatch merge_requests(std::span<const MissRequest> misses) {
  MergedBatch batch;
  if (misses.empty()) return batch;
  batch.layer = misses[0].layer;
  std::set<size_t> union_tokens;
  for (const auto& req : misses) {
    if (req.layer != batch.layer) throw ContractError("merge_requests: mixed layers");
    if (req.tokens.empty()) throw ContractError("merge_requests: empty token set");
    auto& per = batch.per_head[req.head];
    per.insert(per.end(), req.tokens.begin(), req.tokens.end());
    union_tokens.insert(req.tokens.begin(), req.tokens.end());
  }
  for (auto& [head, tokens] : batch.per_head) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  }
  batch.tokens.assign(union_tokens.begin(), union_tokens.end());
  return batch;
}

bool prefetch_worthwhile(const PrefetchPolicy& policy, uint64_t l2, uint64_t l1) {
  if (policy.x == 0) throw ContractError("prefetch policy: x must be positive");
  if (policy.w == 0) throw ContractError("prefetch policy: w must be positive");
  // l2 > w/x + max(0, l2 - l1), compared exactly: l2*x > w + x*max(0, l2-l1).
  const uint64_t beyond = l2 > l1 ? l2 - l1 : 0;
  return l2 * policy.x > policy.w + policy.x * beyond;
}

std::vector<size_t> prefetch_select(const std::map<size_t, uint64_t>& miss_counts, uint64_t l1,
                                    const PrefetchPolicy& policy) {
  std::vector<size_t> heads;
  for (const auto& [head, l2] : miss_counts)
    if (l2 > 0 && prefetch_worthwhile(policy, l2, l1)) heads.push_back(head);
  return heads;
}

}  // namespace smpc
