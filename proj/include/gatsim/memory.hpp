#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gatsim/plan.hpp"
#include "gatsim/time.hpp"
#include "json.hpp"

namespace gatsim {

enum class ConceptKind { event, chat, thought };

std::string to_string(ConceptKind k);
ConceptKind concept_kind_from_string(const std::string& s);

/// Half-open minute interval [start, end).
struct Interval {
  Timestamp start = 0;
  Timestamp end = 0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct ConceptNode {
  std::string id;
  ConceptKind kind = ConceptKind::event;
  std::string content;
  std::vector<double> embedding;
  std::set<std::string> keywords;
  std::set<std::string> spatial;
  std::vector<Interval> temporal;
  double importance = 0.0;
  Timestamp created_at = 0;
  Timestamp last_access = 0;
  Timestamp expires_at = 0;
  std::int64_t initial_lifespan = 0;  // minutes

  friend bool operator==(const ConceptNode&, const ConceptNode&) = default;
};

struct RetrievalQuery {
  std::string text;
  std::set<std::string> keywords;
  std::vector<double> embedding;
  std::set<std::string> spatial;
  std::vector<Interval> temporal;
  Timestamp now = 0;
};

struct RetrievalWeights {
  double w_keyword = 1.0;
  double w_semantic = 1.0;
  double w_spatiotemporal = 1.0;
  double delta = 0.5;   // recency
  double gamma = 0.5;   // importance
  double lambda = 0.90;
  std::size_t top_k = 5;
};

struct KindLifespan {
  double min_hours = 0.0;
  double max_hours = 0.0;
  double power = 1.0;
};

struct DecayPolicy {
  KindLifespan event{2.0, 96.0, 2.4};
  KindLifespan chat{4.0, 48.0, 3.2};
  KindLifespan thought{8.0, 192.0, 1.6};
  const KindLifespan& for_kind(ConceptKind k) const;
};

// Scoring kernels.
double score_keyword(const std::set<std::string>& q, const std::set<std::string>& m);
double score_semantic(const std::vector<double>& q, const std::vector<double>& m);
/// |A ∩ B| / min(|A|, |B|); 0 when either side is empty.
double overlap(const std::set<std::string>& a, const std::set<std::string>& b);
double overlap(const std::vector<Interval>& a, const std::vector<Interval>& b);
double score_spatiotemporal(const std::set<std::string>& sq, const std::vector<Interval>& tq,
                            const std::set<std::string>& sm, const std::vector<Interval>& tm);
double recency(Timestamp now, const ConceptNode& node, double lambda);
/// Lifespan in hours: min + (max - min) * importance^power.
double assign_lifespan(ConceptKind kind, double importance, const DecayPolicy& policy = {});

/// Merges overlapping or touching intervals; drops empty ones.
std::vector<Interval> normalize(std::vector<Interval> iv);
std::int64_t total_minutes(const std::vector<Interval>& iv);

// Text features.
std::vector<std::string> tokenize(const std::string& text);
std::set<std::string> extract_keywords(const std::string& text);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<double> embed(const std::string& text) const = 0;
  virtual std::size_t dimension() const = 0;
};

/// Feature hashing of content tokens into a seeded, signed, unit-norm vector.
class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::uint64_t seed = 0x9e3779b97f4a7c15ULL, std::size_t dim = 64)
      : seed_(seed), dim_(dim) {}
  std::vector<double> embed(const std::string& text) const override;
  std::size_t dimension() const override { return dim_; }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

const EmbeddingProvider& default_embedder();

struct ScoredNode {
  ConceptNode node;
  double score = 0.0;
};

/// Everything needed to build a node besides bookkeeping.
struct ConceptDraft {
  ConceptKind kind = ConceptKind::event;
  std::string content;
  double importance = 0.0;
  std::set<std::string> spatial;
  std::vector<Interval> temporal;
  std::set<std::string> extra_keywords;
};

class MemoryStore {
 public:
  MemoryStore() = default;
  explicit MemoryStore(std::string owner) : owner_(std::move(owner)) {}

  const std::string& owner() const { return owner_; }
  const std::vector<ConceptNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  const ConceptNode* find(const std::string& id) const;

  /// Inserts a prepared node; assigns an id when empty. Returns the id.
  std::string insert(ConceptNode node);
  /// Builds a node (keywords, embedding, lifespan) and inserts it.
  std::string add(const ConceptDraft& draft, Timestamp now, const DecayPolicy& policy = {},
                  const EmbeddingProvider& embedder = default_embedder());

  /// Ranked by score, then newer created_at, then id. Marks returned nodes as
  /// accessed and extends their expiration by their initial lifespan.
  std::vector<ScoredNode> retrieve(const RetrievalQuery& q, const RetrievalWeights& w);
  /// Same ranking without side effects.
  std::vector<ScoredNode> rank(const RetrievalQuery& q, const RetrievalWeights& w) const;
  double score(const ConceptNode& n, const RetrievalQuery& q, const RetrievalWeights& w) const;

  /// Removes nodes whose expiration lies before `now`.
  std::size_t sweep_expired(Timestamp now);

  nlohmann::json to_json() const;
  static MemoryStore from_json(const nlohmann::json& j);

  friend bool operator==(const MemoryStore&, const MemoryStore&) = default;

 private:
  std::string owner_;
  std::vector<ConceptNode> nodes_;
  std::uint64_t next_id_ = 1;
};

RetrievalQuery make_query(const std::string& text, Timestamp now, std::set<std::string> spatial = {},
                          std::vector<Interval> temporal = {},
                          const EmbeddingProvider& embedder = default_embedder());

nlohmann::json node_to_json(const ConceptNode& n);
ConceptNode node_from_json(const nlohmann::json& j);

/// The agent's working space for the current day.
struct ShortTermMemory {
  ActivityPlan today_initial_plan;
  std::vector<PlanRevision> revision_history;
  std::vector<std::string> perceptions;
  std::vector<std::string> chat_summaries;

  void clear();
  /// Rejects a revision older than the last one.
  void record(PlanRevision r);
  nlohmann::json to_json() const;
  static ShortTermMemory from_json(const nlohmann::json& j);
  friend bool operator==(const ShortTermMemory&, const ShortTermMemory&) = default;
};

}  // namespace gatsim
