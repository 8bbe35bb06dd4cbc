#include <cmath>
#include <random>

#include "doctest.h"
#include "gatsim/memory.hpp"
#include "memory_oracle.hpp"

using namespace gatsim;
using doctest::Approx;

namespace {

const Timestamp kMon = make_timestamp({2025, 3, 10});

ConceptNode at_age(double days) {
  ConceptNode n;
  n.created_at = kMon;
  n.last_access = kMon;
  (void)days;
  return n;
}

std::vector<double> unit(std::size_t dim, std::size_t i) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

}  // namespace

TEST_CASE("keyword score") {
  std::set<std::string> a{"metro", "delay", "morning"}, b{"metro", "delay", "evening"};
  CHECK(score_keyword(a, a) == 1.0);
  CHECK(score_keyword(a, {"gym"}) == 0.0);
  CHECK(score_keyword(a, b) == Approx(0.5));
  CHECK(score_keyword(a, b) == score_keyword(b, a));
  CHECK(score_keyword({}, {}) == 0.0);
}

TEST_CASE("semantic score") {
  auto e = unit(64, 3);
  std::vector<double> neg(64, 0.0);
  neg[3] = -1.0;
  CHECK(score_semantic(e, e) == 1.0);
  CHECK(score_semantic(e, neg) == 0.0);
  CHECK(score_semantic(e, unit(64, 4)) == Approx(1.0 - std::sqrt(2.0) / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(score_semantic(e, unit(8, 0)), std::invalid_argument);
}

TEST_CASE("spatiotemporal score") {
  const Timestamp h7 = kMon + 7 * 60;
  std::set<std::string> sq{"Ave_2_link_2"}, sm{"Ave_2_link_2", "Ave_2_link_3"};
  SUBCASE("subset on both axes") {
    CHECK(score_spatiotemporal(sq, {{h7, h7 + 30}}, sm, {{h7 - 60, h7 + 60}}) == 1.0);
  }
  SUBCASE("disjoint in time") {
    CHECK(score_spatiotemporal(sq, {{h7, h7 + 30}}, sm, {{h7 + 30, h7 + 60}}) == 0.0);
  }
  SUBCASE("half overlap in time") {
    CHECK(score_spatiotemporal(sq, {{h7, h7 + 60}}, sm, {{h7 + 30, h7 + 90}}) == Approx(0.5));
  }
  SUBCASE("empty coverage never matches") {
    CHECK(score_spatiotemporal({}, {{h7, h7 + 60}}, sm, {{h7, h7 + 60}}) == 0.0);
  }
}

TEST_CASE("recency decay") {
  ConceptNode n = at_age(0);
  CHECK(recency(kMon, n, 0.9) == 1.0);
  CHECK(recency(kMon + 1 * 1440, n, 0.90) == Approx(0.90).epsilon(0.005));
  CHECK(recency(kMon + 7 * 1440, n, 0.90) == Approx(0.48).epsilon(0.01));
  CHECK(std::abs(recency(kMon + 30 * 1440, n, 0.95) - 0.21) < 0.005);
  CHECK(std::abs(recency(kMon + 7 * 1440, n, 0.95) - 0.70) < 0.005);
  CHECK(std::abs(recency(kMon + 30 * 1440, n, 0.90) - 0.04) < 0.005);
  // access resets the clock
  n.last_access = kMon + 7 * 1440;
  CHECK(recency(kMon + 7 * 1440, n, 0.9) == 1.0);
}

TEST_CASE("lifespan assignment") {
  CHECK(assign_lifespan(ConceptKind::event, 1.0) == 96.0);
  CHECK(assign_lifespan(ConceptKind::event, 0.0) == 2.0);
  CHECK(assign_lifespan(ConceptKind::chat, 0.0) == 4.0);
  CHECK(assign_lifespan(ConceptKind::chat, 1.0) == 48.0);
  CHECK(assign_lifespan(ConceptKind::thought, 0.0) == 8.0);
  CHECK(assign_lifespan(ConceptKind::thought, 1.0) == 192.0);
  const double mid = 2.0 + 94.0 * std::pow(0.5, 2.4);
  CHECK(assign_lifespan(ConceptKind::event, 0.5) == Approx(mid));
  CHECK(std::abs(assign_lifespan(ConceptKind::event, 0.5) - 19.8) < 0.1);
  CHECK_THROWS_AS(assign_lifespan(ConceptKind::event, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(assign_lifespan(ConceptKind::event, -0.1), std::invalid_argument);
}

TEST_CASE("keywords and embeddings") {
  auto k = extract_keywords("The Metro was delayed on Ave_2_link_2 this morning!");
  CHECK(k.count("metro"));
  CHECK(k.count("ave_2_link_2"));
  CHECK_FALSE(k.count("the"));
  auto e = default_embedder().embed("metro delay");
  double n = 0;
  for (double x : e) n += x * x;
  CHECK(e.size() == 64);
  CHECK(std::sqrt(n) == Approx(1.0).epsilon(1e-9));
  CHECK(default_embedder().embed("metro delay") == e);
  auto empty = default_embedder().embed("");
  double ne = 0;
  for (double x : empty) ne += x * x;
  CHECK(ne == Approx(1.0));
}

TEST_CASE("retrieve basics") {
  MemoryStore s("a");
  SUBCASE("empty store") {
    CHECK(s.retrieve(make_query("metro", kMon), {}).empty());
  }
  SUBCASE("singleton") {
    s.add({ConceptKind::event, "metro delay", 0.3}, kMon);
    auto r = s.retrieve(make_query("metro", kMon + 10), {});
    REQUIRE(r.size() == 1);
  }
  SUBCASE("importance breaks otherwise identical nodes") {
    s.add({ConceptKind::event, "metro delay", 0.1}, kMon);
    s.add({ConceptKind::event, "metro delay", 0.9}, kMon);
    auto r = s.retrieve(make_query("metro", kMon + 10), {});
    REQUIRE(r.size() == 2);
    CHECK(r[0].node.importance == 0.9);
  }
  SUBCASE("spatial containment dominates") {
    ConceptDraft a{ConceptKind::event, "slow traffic", 0.5, {"Ave_2_link_2", "Ave_2_link_3"}, {{kMon, kMon + 60}}};
    ConceptDraft b = a;
    b.spatial = {"St_5_link_1"};
    s.add(b, kMon);
    s.add(a, kMon);
    auto q = make_query("unrelated words", kMon + 30, {"Ave_2_link_2"}, {{kMon, kMon + 30}});
    for (const auto& x : s.rank(q, {})) {
      CHECK(x.score == Approx(oracle::brute_score(*s.find(x.node.id), q, {})));
    }
    auto r = s.retrieve(q, {});
    REQUIRE(r.size() == 2);
    CHECK(r[0].node.spatial.count("Ave_2_link_2"));
  }
}

TEST_CASE("retrieval extends expiration and sweep honours it") {
  MemoryStore s("a");
  const std::string id = s.add({ConceptKind::event, "missed supermarket", 0.5}, kMon);
  const ConceptNode before = *s.find(id);
  CHECK(before.expires_at - before.created_at == before.initial_lifespan);
  s.retrieve(make_query("supermarket", kMon + 30), {});
  const ConceptNode after = *s.find(id);
  CHECK(after.expires_at == before.expires_at + before.initial_lifespan);
  CHECK(after.last_access == kMon + 30);
  const Timestamp probe = before.created_at + before.initial_lifespan * 3 / 2;
  CHECK(s.sweep_expired(probe) == 0);
  CHECK(s.size() == 1);
  CHECK(s.sweep_expired(after.expires_at + 1) == 1);
}

TEST_CASE("sweep removes only expired nodes") {
  MemoryStore s("a");
  s.add({ConceptKind::chat, "a", 0.0}, kMon);
  s.add({ConceptKind::thought, "b", 1.0}, kMon);
  CHECK(s.sweep_expired(kMon) == 0);
  CHECK(s.sweep_expired(kMon + 5 * 60) == 1);
  CHECK(s.size() == 1);
  CHECK(s.nodes()[0].content == "b");
}

TEST_CASE("retrieve equals brute-force ranking on random stores") {
  std::mt19937_64 rng(42);
  const Timestamp now = kMon + 5 * 1440;
  for (int trial = 0; trial < 40; ++trial) {
    MemoryStore s = oracle::random_store(rng, 1 + trial % 50, now);
    RetrievalWeights w;
    w.top_k = 1 + trial % 7;
    auto q = oracle::random_query(rng, now);
    auto expect = oracle::brute_rank(s.nodes(), q, w);
    auto got = s.retrieve(q, w);
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].node.id == expect[i].id);
      CHECK(got[i].score == expect[i].score);
    }
  }
}

TEST_CASE("scaling all weights keeps the ranking") {
  std::mt19937_64 rng(9);
  const Timestamp now = kMon + 2 * 1440;
  MemoryStore s = oracle::random_store(rng, 30, now);
  auto q = oracle::random_query(rng, now);
  RetrievalWeights w;
  w.top_k = 30;
  RetrievalWeights w3 = w;
  w3.w_keyword *= 3;
  w3.w_semantic *= 3;
  w3.w_spatiotemporal *= 3;
  w3.delta *= 3;
  w3.gamma *= 3;
  auto a = s.rank(q, w);
  auto b = s.rank(q, w3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == Approx(b[i].score));
}

TEST_CASE("store json round trip") {
  MemoryStore s("agent");
  s.add({ConceptKind::thought, "plan earlier departures", 0.7, {"Ave_2_link_2"}, {{kMon, kMon + 90}}}, kMon);
  s.add({ConceptKind::chat, "car use agreed", 0.4}, kMon + 5);
  auto j = s.to_json();
  CHECK(j["nodes"][0]["created_at"] == "2025-03-10T00:00:00");
  MemoryStore r = MemoryStore::from_json(j);
  CHECK(r == s);
}

TEST_CASE("short-term memory stays chronological") {
  ShortTermMemory m;
  m.record({kMon + 10, RevisionDecision::continue_plan, nlohmann::json::object(), ""});
  CHECK_THROWS(m.record({kMon + 5, RevisionDecision::continue_plan, nlohmann::json::object(), ""}));
  auto r = ShortTermMemory::from_json(m.to_json());
  CHECK(r == m);
}
