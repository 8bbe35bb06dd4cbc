#pragma once
// Brute-force retrieval reference: minute-set counting, full sort.

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gatsim/memory.hpp"

namespace oracle {

inline std::set<gatsim::Timestamp> minutes_of(const std::vector<gatsim::Interval>& iv) {
  std::set<gatsim::Timestamp> s;
  for (const auto& i : iv) {
    for (gatsim::Timestamp t = i.start; t < i.end; ++t) s.insert(t);
  }
  return s;
}

template <class T>
double overlap_sets(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<T> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  return static_cast<double>(inter.size()) / static_cast<double>(std::min(a.size(), b.size()));
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::vector<std::string> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  if (uni.empty()) return 0.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

inline double brute_score(const gatsim::ConceptNode& n, const gatsim::RetrievalQuery& q,
                          const gatsim::RetrievalWeights& w) {
  double ss = 0.0;
  for (std::size_t i = 0; i < q.embedding.size(); ++i) {
    const double d = q.embedding[i] - n.embedding[i];
    ss += d * d;
  }
  const double sem = std::clamp(1.0 - std::sqrt(ss) / 2.0, 0.0, 1.0);
  const double st = overlap_sets(q.spatial, n.spatial) *
                    overlap_sets(minutes_of(q.temporal), minutes_of(n.temporal));
  const double days = static_cast<double>(q.now - std::max(n.created_at, n.last_access)) / 1440.0;
  const double rec = std::pow(w.lambda, std::max(0.0, days));
  const double per_mode[3][2] = {{w.w_keyword, jaccard(q.keywords, n.keywords)},
                                 {w.w_semantic, sem},
                                 {w.w_spatiotemporal, st}};
  double best = 0.0;
  for (const auto& m : per_mode) {
    const double denom = m[0] + w.delta + w.gamma;
    if (denom <= 0.0) continue;
    best = std::max(best, (m[0] * m[1] + w.delta * rec + w.gamma * n.importance) / denom);
  }
  return best;
}

struct Ranked {
  std::string id;
  double score;
};

inline std::vector<Ranked> brute_rank(const std::vector<gatsim::ConceptNode>& nodes,
                                      const gatsim::RetrievalQuery& q,
                                      const gatsim::RetrievalWeights& w) {
  std::vector<std::pair<Ranked, gatsim::Timestamp>> all;
  for (const auto& n : nodes) all.push_back({{n.id, brute_score(n, q, w)}, n.created_at});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.first.score != b.first.score) return a.first.score > b.first.score;
    if (a.second != b.second) return a.second > b.second;
    return a.first.id < b.first.id;
  });
  std::vector<Ranked> out;
  for (std::size_t i = 0; i < all.size() && i < w.top_k; ++i) out.push_back(all[i].first);
  return out;
}

// Random store with a small vocabulary so exact ties are common.
inline gatsim::MemoryStore random_store(std::mt19937_64& rng, int n, gatsim::Timestamp now) {
  static const std::vector<std::string> vocab{"metro", "delay", "morning", "evening", "office",
                                              "factory", "gym", "congestion", "coffee", "late"};
  static const std::vector<std::string> places{"Ave_2_link_2", "St_1_link_2", "Node_5", "Metro_1"};
  std::uniform_int_distribution<int> nw(0, 4), vi(0, static_cast<int>(vocab.size()) - 1),
      pi(0, static_cast<int>(places.size()) - 1), imp(0, 10), age(0, 3 * 1440), span(0, 120);
  gatsim::MemoryStore s("oracle");
  std::vector<gatsim::ConceptNode> made;
  for (int k = 0; k < n; ++k) {
    if (!made.empty() && imp(rng) < 2) {
      gatsim::ConceptNode dup = made[std::uniform_int_distribution<std::size_t>(0, made.size() - 1)(rng)];
      dup.id.clear();
      s.insert(dup);
      continue;
    }
    std::string text;
    for (int w = nw(rng); w > 0; --w) text += vocab[vi(rng)] + " ";
    gatsim::ConceptNode c;
    c.kind = static_cast<gatsim::ConceptKind>(k % 3);
    c.content = text;
    c.keywords = gatsim::extract_keywords(text);
    c.embedding = gatsim::default_embedder().embed(text);
    for (int p = nw(rng) % 3; p > 0; --p) c.spatial.insert(places[pi(rng)]);
    if (nw(rng) > 1) {
      gatsim::Timestamp st = now - age(rng);
      c.temporal.push_back({st, st + span(rng)});
    }
    c.importance = imp(rng) / 10.0;
    c.created_at = now - age(rng);
    c.last_access = c.created_at + (imp(rng) > 7 ? 60 : 0);
    c.initial_lifespan = 120;
    c.expires_at = c.created_at + 600;
    made.push_back(c);
    s.insert(c);
  }
  return s;
}

inline gatsim::RetrievalQuery random_query(std::mt19937_64& rng, gatsim::Timestamp now) {
  static const std::vector<std::string> vocab{"metro", "delay", "morning", "evening", "gym", "late"};
  static const std::vector<std::string> places{"Ave_2_link_2", "St_1_link_2", "Node_5"};
  std::uniform_int_distribution<int> nw(0, 3), vi(0, 5), pi(0, 2), off(0, 3 * 1440);
  std::string text;
  for (int w = nw(rng); w > 0; --w) text += vocab[vi(rng)] + " ";
  std::set<std::string> sp;
  for (int p = nw(rng); p > 0; --p) sp.insert(places[pi(rng)]);
  std::vector<gatsim::Interval> tq;
  if (nw(rng) > 0) {
    gatsim::Timestamp st = now - off(rng);
    tq.push_back({st, st + 90});
  }
  return gatsim::make_query(text, now, sp, tq);
}

}  // namespace oracle
