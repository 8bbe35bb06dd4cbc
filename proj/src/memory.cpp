#include "gatsim/memory.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gatsim/hash.hpp"

namespace gatsim {

using nlohmann::json;

std::string to_string(ConceptKind k) {
  switch (k) {
    case ConceptKind::event: return "event";
    case ConceptKind::chat: return "chat";
    case ConceptKind::thought: return "thought";
  }
  return "event";
}

ConceptKind concept_kind_from_string(const std::string& s) {
  if (s == "event") return ConceptKind::event;
  if (s == "chat") return ConceptKind::chat;
  if (s == "thought") return ConceptKind::thought;
  throw std::invalid_argument("unknown concept kind '" + s + "'");
}

const KindLifespan& DecayPolicy::for_kind(ConceptKind k) const {
  switch (k) {
    case ConceptKind::event: return event;
    case ConceptKind::chat: return chat;
    case ConceptKind::thought: return thought;
  }
  return event;
}

double score_keyword(const std::set<std::string>& q, const std::set<std::string>& m) {
  if (q.empty() && m.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& k : q) inter += m.count(k);
  const std::size_t uni = q.size() + m.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double score_semantic(const std::vector<double>& q, const std::vector<double>& m) {
  if (q.size() != m.size()) {
    throw std::invalid_argument("embedding dimension mismatch: " + std::to_string(q.size()) +
                                " vs " + std::to_string(m.size()));
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double d = q[i] - m[i];
    ss += d * d;
  }
  const double s = 1.0 - std::sqrt(ss) / 2.0;
  return std::clamp(s, 0.0, 1.0);
}

double overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  return static_cast<double>(inter) / static_cast<double>(std::min(a.size(), b.size()));
}

std::vector<Interval> normalize(std::vector<Interval> iv) {
  iv.erase(std::remove_if(iv.begin(), iv.end(), [](const Interval& i) { return i.end <= i.start; }),
           iv.end());
  std::sort(iv.begin(), iv.end(), [](const Interval& a, const Interval& b) {
    return a.start != b.start ? a.start < b.start : a.end < b.end;
  });
  std::vector<Interval> out;
  for (const auto& i : iv) {
    if (!out.empty() && i.start <= out.back().end) {
      out.back().end = std::max(out.back().end, i.end);
    } else {
      out.push_back(i);
    }
  }
  return out;
}

std::int64_t total_minutes(const std::vector<Interval>& iv) {
  std::int64_t n = 0;
  for (const auto& i : normalize(iv)) n += i.end - i.start;
  return n;
}

double overlap(const std::vector<Interval>& a, const std::vector<Interval>& b) {
  const auto na = normalize(a);
  const auto nb = normalize(b);
  const std::int64_t sa = total_minutes(na);
  const std::int64_t sb = total_minutes(nb);
  if (sa == 0 || sb == 0) return 0.0;
  std::int64_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < na.size() && j < nb.size()) {
    const Timestamp lo = std::max(na[i].start, nb[j].start);
    const Timestamp hi = std::min(na[i].end, nb[j].end);
    if (hi > lo) inter += hi - lo;
    if (na[i].end < nb[j].end) ++i; else ++j;
  }
  return static_cast<double>(inter) / static_cast<double>(std::min(sa, sb));
}

double score_spatiotemporal(const std::set<std::string>& sq, const std::vector<Interval>& tq,
                            const std::set<std::string>& sm, const std::vector<Interval>& tm) {
  return overlap(sq, sm) * overlap(tq, tm);
}

double recency(Timestamp now, const ConceptNode& node, double lambda) {
  const Timestamp ref = std::max(node.created_at, node.last_access);
  const double days = std::max<double>(0.0, static_cast<double>(now - ref) / kMinutesPerDay);
  return std::pow(lambda, days);
}

double assign_lifespan(ConceptKind kind, double importance, const DecayPolicy& policy) {
  if (!(importance >= 0.0 && importance <= 1.0)) {
    throw std::invalid_argument("importance must lie in [0, 1]");
  }
  const KindLifespan& k = policy.for_kind(kind);
  return k.min_hours + (k.max_hours - k.min_hours) * std::pow(importance, k.power);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '_') {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> s{
      "a", "about", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be",
      "because", "been", "before", "being", "but", "by", "can", "could", "did", "do", "does",
      "doing", "for", "from", "had", "has", "have", "having", "he", "her", "here", "hers",
      "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me", "more",
      "my", "no", "nor", "not", "now", "of", "on", "once", "only", "or", "other", "our", "out",
      "over", "own", "s", "same", "she", "should", "so", "some", "such", "than", "that", "the",
      "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
      "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where",
      "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your", "today",
      "yesterday", "also", "still", "s", "t"};
  return s;
}

}  // namespace

std::set<std::string> extract_keywords(const std::string& text) {
  std::set<std::string> out;
  for (auto& t : tokenize(text)) {
    if (t.size() < 2 || stopwords().count(t)) continue;
    out.insert(t);
  }
  return out;
}

std::vector<double> HashingEmbedder::embed(const std::string& text) const {
  std::vector<double> v(dim_, 0.0);
  for (const auto& tok : extract_keywords(text)) {
    const std::uint64_t h = mix64(fnv1a64(tok) ^ seed_);
    const std::size_t idx = static_cast<std::size_t>(h % dim_);
    v[idx] += (h >> 63) ? -1.0 : 1.0;
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  if (n == 0.0) {
    v[static_cast<std::size_t>(mix64(seed_) % dim_)] = 1.0;
    return v;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

const EmbeddingProvider& default_embedder() {
  static const HashingEmbedder e;
  return e;
}

const ConceptNode* MemoryStore::find(const std::string& id) const {
  for (const auto& n : nodes_) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

std::string MemoryStore::insert(ConceptNode node) {
  if (node.id.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "m%06llu", static_cast<unsigned long long>(next_id_++));
    node.id = buf;
  }
  if (!(node.importance >= 0.0 && node.importance <= 1.0)) {
    throw std::invalid_argument("importance must lie in [0, 1]");
  }
  if (node.expires_at < node.created_at) throw std::invalid_argument("expires_at before created_at");
  if (find(node.id)) throw std::invalid_argument("duplicate memory id '" + node.id + "'");
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

std::string MemoryStore::add(const ConceptDraft& d, Timestamp now, const DecayPolicy& policy,
                             const EmbeddingProvider& embedder) {
  ConceptNode n;
  n.kind = d.kind;
  n.content = d.content;
  n.importance = d.importance;
  n.keywords = extract_keywords(d.content);
  n.keywords.insert(d.extra_keywords.begin(), d.extra_keywords.end());
  n.embedding = embedder.embed(d.content);
  n.spatial = d.spatial;
  n.temporal = normalize(d.temporal);
  n.created_at = now;
  n.last_access = now;
  n.initial_lifespan = std::llround(assign_lifespan(d.kind, d.importance, policy) * 60.0);
  n.expires_at = now + n.initial_lifespan;
  return insert(std::move(n));
}

double MemoryStore::score(const ConceptNode& n, const RetrievalQuery& q,
                          const RetrievalWeights& w) const {
  const double rec = recency(q.now, n, w.lambda);
  const double modes[3][2] = {
      {w.w_keyword, score_keyword(q.keywords, n.keywords)},
      {w.w_semantic, score_semantic(q.embedding, n.embedding)},
      {w.w_spatiotemporal, score_spatiotemporal(q.spatial, q.temporal, n.spatial, n.temporal)}};
  double best = 0.0;
  for (const auto& m : modes) {
    const double denom = m[0] + w.delta + w.gamma;
    if (denom <= 0.0) continue;
    const double s = (m[0] * m[1] + w.delta * rec + w.gamma * n.importance) / denom;
    best = std::max(best, s);
  }
  return best;
}

std::vector<ScoredNode> MemoryStore::rank(const RetrievalQuery& q, const RetrievalWeights& w) const {
  std::vector<std::pair<double, const ConceptNode*>> scored;
  scored.reserve(nodes_.size());
  for (const auto& n : nodes_) scored.emplace_back(score(n, q, w), &n);
  auto before = [](const std::pair<double, const ConceptNode*>& a,
                   const std::pair<double, const ConceptNode*>& b) {
    if (a.first != b.first) return a.first > b.first;
    if (a.second->created_at != b.second->created_at) return a.second->created_at > b.second->created_at;
    return a.second->id < b.second->id;
  };
  const std::size_t k = std::min(w.top_k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), before);
  std::vector<ScoredNode> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({*scored[i].second, scored[i].first});
  return out;
}

std::vector<ScoredNode> MemoryStore::retrieve(const RetrievalQuery& q, const RetrievalWeights& w) {
  auto out = rank(q, w);
  for (auto& s : out) {
    for (auto& n : nodes_) {
      if (n.id != s.node.id) continue;
      n.last_access = std::max(n.last_access, q.now);
      n.expires_at += n.initial_lifespan;
      s.node = n;
      break;
    }
  }
  return out;
}

std::size_t MemoryStore::sweep_expired(Timestamp now) {
  const auto before = nodes_.size();
  nodes_.erase(std::remove_if(nodes_.begin(), nodes_.end(),
                              [&](const ConceptNode& n) { return n.expires_at < now; }),
               nodes_.end());
  return before - nodes_.size();
}

json node_to_json(const ConceptNode& n) {
  json temporal = json::array();
  for (const auto& i : n.temporal) temporal.push_back({to_iso(i.start), to_iso(i.end)});
  return {{"id", n.id},
          {"kind", to_string(n.kind)},
          {"content", n.content},
          {"embedding", n.embedding},
          {"keywords", n.keywords},
          {"spatial_coverage", n.spatial},
          {"temporal_scope", temporal},
          {"importance", n.importance},
          {"created_at", to_iso(n.created_at)},
          {"last_access", to_iso(n.last_access)},
          {"expires_at", to_iso(n.expires_at)},
          {"initial_lifespan_minutes", n.initial_lifespan}};
}

ConceptNode node_from_json(const json& j) {
  ConceptNode n;
  n.id = j.at("id").get<std::string>();
  n.kind = concept_kind_from_string(j.at("kind").get<std::string>());
  n.content = j.at("content").get<std::string>();
  n.embedding = j.at("embedding").get<std::vector<double>>();
  n.keywords = j.at("keywords").get<std::set<std::string>>();
  n.spatial = j.at("spatial_coverage").get<std::set<std::string>>();
  for (const auto& i : j.at("temporal_scope")) {
    n.temporal.push_back({parse_iso(i.at(0).get<std::string>()), parse_iso(i.at(1).get<std::string>())});
  }
  n.importance = j.at("importance").get<double>();
  n.created_at = parse_iso(j.at("created_at").get<std::string>());
  n.last_access = parse_iso(j.at("last_access").get<std::string>());
  n.expires_at = parse_iso(j.at("expires_at").get<std::string>());
  n.initial_lifespan = j.at("initial_lifespan_minutes").get<std::int64_t>();
  return n;
}

json MemoryStore::to_json() const {
  json nodes = json::array();
  for (const auto& n : nodes_) nodes.push_back(node_to_json(n));
  return {{"owner", owner_}, {"next_id", next_id_}, {"nodes", nodes}};
}

MemoryStore MemoryStore::from_json(const json& j) {
  MemoryStore s(j.value("owner", std::string{}));
  for (const auto& n : j.at("nodes")) s.nodes_.push_back(node_from_json(n));
  s.next_id_ = j.value("next_id", static_cast<std::uint64_t>(s.nodes_.size() + 1));
  return s;
}

RetrievalQuery make_query(const std::string& text, Timestamp now, std::set<std::string> spatial,
                          std::vector<Interval> temporal, const EmbeddingProvider& embedder) {
  RetrievalQuery q;
  q.text = text;
  q.keywords = extract_keywords(text);
  q.embedding = embedder.embed(text);
  q.spatial = std::move(spatial);
  q.temporal = normalize(std::move(temporal));
  q.now = now;
  return q;
}

void ShortTermMemory::clear() { *this = ShortTermMemory{}; }

void ShortTermMemory::record(PlanRevision r) {
  if (!revision_history.empty() && r.at < revision_history.back().at) {
    throw std::invalid_argument("revision history must stay chronological");
  }
  revision_history.push_back(std::move(r));
}

json ShortTermMemory::to_json() const {
  json revs = json::array();
  for (const auto& r : revision_history) revs.push_back(revision_to_json(r));
  return {{"today_initial_plan", plan_to_json(today_initial_plan)},
          {"revision_history", revs},
          {"perceptions", perceptions},
          {"chat_summaries", chat_summaries}};
}

ShortTermMemory ShortTermMemory::from_json(const json& j) {
  ShortTermMemory s;
  s.today_initial_plan = plan_from_json(j.at("today_initial_plan"));
  for (const auto& r : j.at("revision_history")) s.revision_history.push_back(revision_from_json(r));
  s.perceptions = j.at("perceptions").get<std::vector<std::string>>();
  s.chat_summaries = j.at("chat_summaries").get<std::vector<std::string>>();
  return s;
}

}  // namespace gatsim
