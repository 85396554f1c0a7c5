#include <algorithm>
#include <set>

#include "doctest.h"
#include "mdssl/batching.hpp"
#include "mdssl/errors.hpp"

using namespace mdssl;

namespace {

std::vector<Utterance> pool_of(std::initializer_list<std::pair<int, std::size_t>> domain_counts, std::size_t len = 20) {
  std::vector<Utterance> pool;
  int id = 0;
  for (const auto& [d, n] : domain_counts)
    for (std::size_t k = 0; k < n; ++k) {
      Utterance u{id, id, d, Matrix(len, 2)};
      for (std::size_t t = 0; t < len; ++t) u.frames(t, 0) = static_cast<double>(t);
      pool.push_back(std::move(u));
      ++id;
    }
  return pool;
}

const std::vector<Utterance>& default_pool() {
  static const std::vector<Utterance> pool = [] {
    const Corpus c = generate(CorpusSpec{});
    const auto dev = c.select(Split::dev);
    return combine_short(dev, 20);
  }();
  return pool;
}

}  // namespace

TEST_CASE("partition of a small label list") {
  const std::vector<int> doms{0, 0, 1, 1, 0, 1};
  const auto part = partition_by_domain(doms);
  REQUIRE(part.size() == 2);
  CHECK(part.at(0) == std::vector<std::size_t>{0, 1, 4});
  CHECK(part.at(1) == std::vector<std::size_t>{2, 3, 5});
  CHECK(partition_by_domain(std::vector<int>{3, 3, 3}).at(3) == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("negatives by sampling mode") {
  const std::vector<int> doms{0, 0, 1, 1, 0, 1};
  CHECK(negatives_for(doms, 0, SamplingMode::in_domain) == std::vector<std::size_t>{1, 4});
  CHECK(negatives_for(doms, 0, SamplingMode::single_domain) == std::vector<std::size_t>{1, 2, 3, 4, 5});
  const std::vector<int> one{2, 2, 2, 2};
  for (std::size_t a = 0; a < one.size(); ++a)
    CHECK(negatives_for(one, a, SamplingMode::in_domain) == negatives_for(one, a, SamplingMode::single_domain));
  CHECK_THROWS_AS(negatives_for(doms, 6, SamplingMode::in_domain), ShapeError);
}

TEST_CASE("in-domain negatives are a subset of all negatives") {
  Rng rng(3);
  std::uniform_int_distribution<int> dom(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> doms(2 + static_cast<std::size_t>(trial % 20));
    for (int& d : doms) d = dom(rng);
    for (std::size_t a = 0; a < doms.size(); ++a) {
      const auto in = negatives_for(doms, a, SamplingMode::in_domain);
      const auto all = negatives_for(doms, a, SamplingMode::single_domain);
      CHECK(std::includes(all.begin(), all.end(), in.begin(), in.end()));
      for (std::size_t j : in) CHECK(doms[j] == doms[a]);
    }
  }
}

TEST_CASE("single-domain pool gives a single partition key") {
  const auto pool = pool_of({{4, 10}});
  Rng rng(1);
  BatchConfig cfg;
  cfg.batch_size = 6;
  const MiniBatch b = build_batch(pool, cfg, rng);
  REQUIRE(b.domain_partition.size() == 1);
  CHECK(b.domain_partition.at(4) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("batch invariants over many draws") {
  const auto pool = pool_of({{0, 5}, {1, 3}, {2, 8}, {3, 2}, {4, 1}});
  Rng rng(11);
  BatchConfig cfg;
  cfg.view_min_frames = 4;
  for (std::size_t bs : {2u, 3u, 5u, 8u, 12u, 18u}) {
    cfg.batch_size = bs;
    for (int trial = 0; trial < 50; ++trial) {
      const MiniBatch b = build_batch(pool, cfg, rng);
      REQUIRE(b.size() == bs);
      std::set<int> ids;
      std::set<std::size_t> covered;
      for (const auto& [d, idx] : b.domain_partition) {
        CHECK(idx.size() >= cfg.min_per_domain);
        CHECK(d != 4);
        for (std::size_t i : idx) {
          CHECK(covered.insert(i).second);
          CHECK(b.items[i].domain_id == d);
        }
      }
      CHECK(covered.size() == bs);
      for (const auto& it : b.items) {
        CHECK(ids.insert(it.utterance_id).second);
        CHECK(it.query.domain_id == it.domain_id);
        CHECK(it.key.domain_id == it.domain_id);
        CHECK(it.query.utterance_id == it.utterance_id);
        const bool disjoint = it.query.offset + it.query.frames.rows() <= it.key.offset ||
                              it.key.offset + it.key.frames.rows() <= it.query.offset;
        CHECK(disjoint);
      }
    }
  }
}

TEST_CASE("infeasible batches are reported") {
  Rng rng(2);
  BatchConfig cfg;
  cfg.batch_size = 8;
  CHECK_THROWS_AS(build_batch(pool_of({{0, 1}, {1, 1}, {2, 1}}), cfg, rng), InfeasibleBatchError);
  CHECK_THROWS_AS(build_batch(pool_of({{0, 3}, {1, 3}}), cfg, rng), InfeasibleBatchError);
  CHECK_THROWS_AS(build_batch(pool_of({{0, 20}}, 10), cfg, rng), InfeasibleBatchError);
}

TEST_CASE("default batch composition is reproducible") {
  Rng a(77), b(77);
  const MiniBatch x = build_batch(default_pool(), BatchConfig{}, a);
  const MiniBatch y = build_batch(default_pool(), BatchConfig{}, b);
  REQUIRE(x.size() == 64);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x.items[i].utterance_id == y.items[i].utterance_id);
    CHECK(x.items[i].query.frames == y.items[i].query.frames);
    CHECK(x.items[i].key.frames == y.items[i].key.frames);
  }

  // Recorded at first run (libstdc++ distributions).
  const std::vector<int> first_ids{123, 212, 1212, 69, 1069, 728, 1702, 1060, 1427, 730};
  for (std::size_t i = 0; i < first_ids.size(); ++i) CHECK(x.items[i].utterance_id == first_ids[i]);
  const std::map<int, std::size_t> sizes{{0, 11}, {1, 10}, {2, 11}, {3, 11}, {4, 11}, {5, 10}};
  for (const auto& [d, n] : sizes) CHECK(x.domain_partition.at(d).size() == n);
  CHECK(x.items[0].query.offset == 20);
  CHECK(x.items[0].query.frames.rows() == 8);
  CHECK(x.items[0].key.offset == 6);
  CHECK(x.items[0].key.frames.rows() == 14);
}
