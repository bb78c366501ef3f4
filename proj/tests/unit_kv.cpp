#include <doctest.h>

#include "smpc/kv_cache.hpp"

using namespace smpc;

TEST_CASE("lookup on an empty store reports all misses") {
  KVStore store(1, 4, 8);
  std::vector<size_t> heads = {0, 2};
  auto res = store.lookup(0, heads, 5);
  CHECK(res.hits == 0);
  REQUIRE(res.misses.size() == 2);
  CHECK(res.misses[0].head == 0);
  CHECK(res.misses[0].tokens == std::vector<size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("lookup on a fully populated store reports no misses") {
  KVStore store(1, 2, 4);
  std::vector<Ring> row(4, 7);
  for (size_t h = 0; h < 2; ++h)
    for (size_t t = 0; t < 6; ++t) store.put(0, h, t, row, row);
  std::vector<size_t> heads = {0, 1};
  auto res = store.lookup(0, heads, 6);
  CHECK(res.hits == 12);
  CHECK(res.misses.empty());
}

TEST_CASE("lookup: present {1,3} of 4 leaves misses {2,4}") {
  // 1-based {1,3} of 4 tokens = 0-based {0,2}; misses are {1,3}.
  KVStore store(1, 1, 2);
  std::vector<Ring> row(2, 1);
  store.put(0, 0, 0, row, row);
  store.put(0, 0, 2, row, row);
  std::vector<size_t> heads = {0};
  auto res = store.lookup(0, heads, 4);
  REQUIRE(res.misses.size() == 1);
  CHECK(res.misses[0].tokens == std::vector<size_t>{1, 3});
  CHECK(store.miss_count(0, 0, 4) == 2);
}

TEST_CASE("stored shares reconstruct unchanged") {
  KVStore store(2, 2, 3);
  std::vector<Ring> k = {1, 2, 3}, v = {4, 5, 6};
  store.put(1, 1, 7, k, v);
  CHECK(store.present(1, 1, 7));
  CHECK_FALSE(store.present(1, 1, 6));
  auto kr = store.k_row(1, 1, 7);
  CHECK(std::vector<Ring>(kr.begin(), kr.end()) == k);
  CHECK_THROWS_AS(store.k_row(1, 0, 7), ContractError);
}

TEST_CASE("merge_requests unions tokens and dedupes") {
  std::vector<MissRequest> misses = {
      {0, 1, {3, 5}},
      {0, 3, {5, 7}},
      {0, 1, {5}},  // duplicate (head, token)
  };
  MergedBatch batch = merge_requests(misses);
  CHECK(batch.tokens == std::vector<size_t>{3, 5, 7});
  CHECK(batch.per_head.at(1) == std::vector<size_t>{3, 5});
  CHECK(batch.per_head.at(3) == std::vector<size_t>{5, 7});

  std::vector<MissRequest> mixed = {{0, 1, {3}}, {1, 2, {4}}};
  CHECK_THROWS_AS(merge_requests(mixed), ContractError);
  CHECK(merge_requests({}).tokens.empty());
}

TEST_CASE("prefetch policy: paper-scale head needs more than 128 misses") {
  PrefetchPolicy policy{524288, 4096};  // w = 4096 x 128 head, x = 4096
  CHECK(prefetch_worthwhile(policy, 150, 200));
  CHECK_FALSE(prefetch_worthwhile(policy, 100, 200));
  // Exact threshold: L2 > w/x = 128 when L2 <= L1.
  CHECK_FALSE(prefetch_worthwhile(policy, 128, 200));
  CHECK(prefetch_worthwhile(policy, 129, 200));
  // L1 = 0: L2 > w/x + L2 never holds.
  for (uint64_t l2 : {1ULL, 128ULL, 1000ULL, 1000000ULL})
    CHECK_FALSE(prefetch_worthwhile(policy, l2, 0));
}

TEST_CASE("prefetch_select filters by the inequality") {
  PrefetchPolicy policy{524288, 4096};
  std::map<size_t, uint64_t> cands = {{0, 150}, {1, 100}, {2, 129}, {3, 0}};
  CHECK(prefetch_select(cands, 200, policy) == std::vector<size_t>{0, 2});
  CHECK(prefetch_select(cands, 0, policy).empty());
  // L2 beyond L1: extra token cost eats the benefit.
  std::map<size_t, uint64_t> big = {{0, 300}};
  CHECK(prefetch_select(big, 300, policy) == std::vector<size_t>{0});
  CHECK(prefetch_select(big, 100, policy).empty());  // 300 > 128 + 200 fails
  CHECK(prefetch_select(big, 180, policy) == std::vector<size_t>{0});  // 300 > 128+120
}

TEST_CASE("prefetch policy rejects degenerate parameters") {
  CHECK_THROWS_AS(prefetch_worthwhile({0, 4096}, 10, 10), ContractError);
  CHECK_THROWS_AS(prefetch_worthwhile({4096, 0}, 10, 10), ContractError);
}
