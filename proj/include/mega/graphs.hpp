#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mega/common.hpp"
#include "mega/corpus.hpp"

namespace mega {

// ---------------------------------------------------------------------------
// Call interaction graph G_I
// ---------------------------------------------------------------------------

/// Bipartite method-API graph; an edge exists iff the API appears at least
/// once in the method's call sequence. Adjacency is indexed by global entity
/// id and sorted ascending on both sides.
class CallInteractionGraph {
 public:
  CallInteractionGraph() = default;
  explicit CallInteractionGraph(std::size_t n_entities) : adj_(n_entities) {}

  const std::vector<std::uint32_t>& neighbors(std::uint32_t gid) const {
    static const std::vector<std::uint32_t> kEmpty;
    return gid < adj_.size() ? adj_[gid] : kEmpty;
  }

  bool has_edge(std::uint32_t method, std::uint32_t api) const {
    const auto& n = neighbors(method);
    return std::binary_search(n.begin(), n.end(), api);
  }

  std::size_t entity_count() const { return adj_.size(); }

  std::size_t edge_count() const { return edge_count_; }

  void add_edge(std::uint32_t method, std::uint32_t api) {
    adj_[method].push_back(api);
    adj_[api].push_back(method);
  }

  void finalize() {
    edge_count_ = 0;
    for (auto& v : adj_) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    // Each undirected edge is stored on both sides.
    for (const auto& v : adj_) edge_count_ += v.size();
    edge_count_ /= 2;
  }

 private:
  std::vector<std::vector<std::uint32_t>> adj_;
  std::size_t edge_count_ = 0;
};

inline CallInteractionGraph build_interaction(const Corpus& corpus) {
  if (corpus.methods.empty()) throw DataError("build_interaction: empty corpus");
  CallInteractionGraph g(corpus.universe.size());
  for (const auto& m : corpus.methods) {
    std::vector<std::uint32_t> apis;
    apis.reserve(m.calls.size());
    for (const auto& c : m.calls) apis.push_back(c.index);
    std::sort(apis.begin(), apis.end());
    apis.erase(std::unique(apis.begin(), apis.end()), apis.end());
    for (auto a : apis) g.add_edge(m.method.index, a);
  }
  g.finalize();
  return g;
}

// ---------------------------------------------------------------------------
// Global API co-occurrence graph G_C
// ---------------------------------------------------------------------------

/// Equidistant discretization of raw co-occurrence counts into T edge types.
struct Bucketizer {
  std::uint32_t f_min = 0;
  std::uint32_t f_max = 0;
  std::uint32_t buckets = 1;

  std::uint32_t bucket(std::uint32_t f) const {
    double width = (static_cast<double>(f_max) - f_min + 1.0) / buckets;
    auto b = static_cast<std::int64_t>(
        std::floor((static_cast<double>(f) - f_min) / width));
    if (b < 0) b = 0;
    if (b >= buckets) b = buckets - 1;
    return static_cast<std::uint32_t>(b);
  }
};

struct CoEdge {
  std::uint32_t a = 0;  // canonical: a < b
  std::uint32_t b = 0;
  std::uint32_t weight = 0;
  std::int32_t bucket = -1;  // -1 until bucketized
};

/// Undirected weighted API-API graph. Each undirected edge expands to the
/// two directed triples (a,f,b) and (b,f,a) when neighbors are walked.
class CoOccurrenceGraph {
 public:
  CoOccurrenceGraph() = default;
  CoOccurrenceGraph(std::size_t n_entities, std::vector<CoEdge> edges)
      : edges_(std::move(edges)), incident_(n_entities) {
    std::sort(edges_.begin(), edges_.end(), [](const CoEdge& x, const CoEdge& y) {
      return x.a != y.a ? x.a < y.a : x.b < y.b;
    });
    for (std::uint32_t e = 0; e < edges_.size(); ++e) {
      incident_[edges_[e].a].push_back(e);
      incident_[edges_[e].b].push_back(e);
    }
  }

  const std::vector<CoEdge>& edges() const { return edges_; }
  std::vector<CoEdge>& edges() { return edges_; }
  std::size_t entity_count() const { return incident_.size(); }

  /// Indices into edges() of all edges incident to `gid`.
  const std::vector<std::uint32_t>& incident(std::uint32_t gid) const {
    static const std::vector<std::uint32_t> kEmpty;
    return gid < incident_.size() ? incident_[gid] : kEmpty;
  }

  std::uint32_t weight(std::uint32_t i, std::uint32_t j) const {
    const CoEdge* e = find(i, j);
    return e ? e->weight : 0;
  }

  std::int32_t bucket(std::uint32_t i, std::uint32_t j) const {
    const CoEdge* e = find(i, j);
    return e ? e->bucket : -1;
  }

 private:
  const CoEdge* find(std::uint32_t i, std::uint32_t j) const {
    if (i == j) return nullptr;
    CoEdge probe{std::min(i, j), std::max(i, j), 0, -1};
    auto it = std::lower_bound(edges_.begin(), edges_.end(), probe,
                               [](const CoEdge& x, const CoEdge& y) {
                                 return x.a != y.a ? x.a < y.a : x.b < y.b;
                               });
    if (it == edges_.end() || it->a != probe.a || it->b != probe.b) return nullptr;
    return &*it;
  }

  std::vector<CoEdge> edges_;
  std::vector<std::vector<std::uint32_t>> incident_;
};

/// Counts API pairs within window `epsilon` over every call sequence. For
/// positions p < q with q - p <= epsilon and distinct APIs, the undirected
/// weight of {A[p], A[q]} is incremented once per position pair.
inline CoOccurrenceGraph build_cooccurrence(const Corpus& corpus, std::size_t epsilon) {
  if (epsilon < 1) throw DataError("build_cooccurrence: epsilon must be >= 1");
  std::unordered_map<std::uint64_t, std::uint32_t> counts;
  for (const auto& m : corpus.methods) {
    const auto& calls = m.calls;
    for (std::size_t p = 0; p < calls.size(); ++p) {
      std::size_t q_end = std::min(calls.size(), p + epsilon + 1);
      for (std::size_t q = p + 1; q < q_end; ++q) {
        std::uint32_t x = calls[p].index, y = calls[q].index;
        if (x == y) continue;
        std::uint64_t key = (static_cast<std::uint64_t>(std::min(x, y)) << 32) | std::max(x, y);
        ++counts[key];
      }
    }
  }
  std::vector<CoEdge> edges;
  edges.reserve(counts.size());
  for (const auto& [key, w] : counts)
    edges.push_back(CoEdge{static_cast<std::uint32_t>(key >> 32),
                           static_cast<std::uint32_t>(key & 0xffffffffu), w, -1});
  return CoOccurrenceGraph(corpus.universe.size(), std::move(edges));
}

/// Assigns every edge its equidistant bucket over the observed weight range.
inline Bucketizer bucketize(CoOccurrenceGraph& graph, std::uint32_t buckets) {
  if (buckets < 1) throw DataError("bucketize: bucket count must be >= 1");
  if (graph.edges().empty()) throw DataError("bucketize: graph has no edges");
  Bucketizer bz;
  bz.buckets = buckets;
  bz.f_min = bz.f_max = graph.edges().front().weight;
  for (const auto& e : graph.edges()) {
    bz.f_min = std::min(bz.f_min, e.weight);
    bz.f_max = std::max(bz.f_max, e.weight);
  }
  for (auto& e : graph.edges()) e.bucket = static_cast<std::int32_t>(bz.bucket(e.weight));
  return bz;
}

// ---------------------------------------------------------------------------
// Hierarchical structure graph G_H
// ---------------------------------------------------------------------------

enum class Relation : std::uint8_t {
  BelongToClass = 0,
  BelongToProject = 1,
  BelongToPackage = 2,
};

inline constexpr std::size_t kRelationCount = 3;

inline const char* relation_name(Relation r) {
  switch (r) {
    case Relation::BelongToClass: return "belong-to-class";
    case Relation::BelongToProject: return "belong-to-project";
    case Relation::BelongToPackage: return "belong-to-package";
  }
  return "?";
}

struct HierTriple {
  std::uint32_t head = 0;
  Relation rel = Relation::BelongToClass;
  std::uint32_t tail = 0;

  friend bool operator==(const HierTriple& x, const HierTriple& y) {
    return x.head == y.head && x.rel == y.rel && x.tail == y.tail;
  }
  friend bool operator<(const HierTriple& x, const HierTriple& y) {
    if (x.head != y.head) return x.head < y.head;
    if (x.rel != y.rel) return x.rel < y.rel;
    return x.tail < y.tail;
  }
};

/// Directed typed belong-to graph over methods, APIs, classes, projects and
/// packages. Triples are deduplicated and sorted.
class HierarchyGraph {
 public:
  HierarchyGraph() = default;
  HierarchyGraph(std::size_t n_entities, std::vector<HierTriple> triples)
      : triples_(std::move(triples)), out_(n_entities) {
    std::sort(triples_.begin(), triples_.end());
    triples_.erase(std::unique(triples_.begin(), triples_.end()), triples_.end());
    for (std::uint32_t t = 0; t < triples_.size(); ++t) out_[triples_[t].head].push_back(t);
  }

  const std::vector<HierTriple>& triples() const { return triples_; }
  std::size_t entity_count() const { return out_.size(); }

  /// Indices into triples() of outgoing triples of `gid`.
  const std::vector<std::uint32_t>& outgoing(std::uint32_t gid) const {
    static const std::vector<std::uint32_t> kEmpty;
    return gid < out_.size() ? out_[gid] : kEmpty;
  }

 private:
  std::vector<HierTriple> triples_;
  std::vector<std::vector<std::uint32_t>> out_;
};

inline HierarchyGraph build_hierarchy(const Corpus& corpus) {
  std::vector<HierTriple> triples;
  triples.reserve(2 * (corpus.methods.size() + corpus.api_meta.size()));
  for (const auto& m : corpus.methods) {
    triples.push_back({m.method.index, Relation::BelongToClass, m.klass.index});
    triples.push_back({m.klass.index, Relation::BelongToProject, m.project.index});
  }
  for (const auto& a : corpus.api_meta) {
    triples.push_back({a.api.index, Relation::BelongToClass, a.klass.index});
    triples.push_back({a.klass.index, Relation::BelongToPackage, a.package.index});
  }
  return HierarchyGraph(corpus.universe.size(), std::move(triples));
}

// ---------------------------------------------------------------------------
// Bundle + serialization (magic "MEGG")
// ---------------------------------------------------------------------------

struct GraphBundle {
  CallInteractionGraph interaction;
  CoOccurrenceGraph cooc;
  HierarchyGraph hier;
  Bucketizer bucketizer;
};

namespace detail {

inline void write_header(std::ostream& os, std::uint8_t graph_type) {
  os.write("MEGG", 4);
  io::write_le<std::uint16_t>(os, 1);
  io::write_le<std::uint8_t>(os, graph_type);
}

inline void read_header(std::istream& is, std::uint8_t graph_type) {
  io::expect_magic(is, "MEGG", "graph");
  auto version = io::read_le<std::uint16_t>(is);
  if (version != 1) throw DataError(msg("unsupported graph file version ", version));
  auto type = io::read_le<std::uint8_t>(is);
  if (type != graph_type)
    throw DataError(msg("graph file type mismatch: expected ", int(graph_type), ", got ",
                        int(type)));
}

}  // namespace detail

inline void save_graphs(const std::string& dir, const GraphBundle& g) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream os(fs::path(dir) / "interaction.bin", std::ios::binary);
    if (!os) throw DataError(msg("cannot write ", dir, "/interaction.bin"));
    detail::write_header(os, 0);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.interaction.entity_count()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.interaction.edge_count()));
    // One canonical (low, high) pair per undirected edge, ascending.
    for (std::uint32_t gid = 0; gid < g.interaction.entity_count(); ++gid)
      for (auto other : g.interaction.neighbors(gid))
        if (gid < other) {
          io::write_le<std::uint32_t>(os, gid);
          io::write_le<std::uint32_t>(os, other);
        }
  }
  {
    std::ofstream os(fs::path(dir) / "cooc.bin", std::ios::binary);
    if (!os) throw DataError(msg("cannot write ", dir, "/cooc.bin"));
    detail::write_header(os, 1);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.cooc.entity_count()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.cooc.edges().size()));
    for (const auto& e : g.cooc.edges()) {
      io::write_le<std::uint32_t>(os, e.a);
      io::write_le<std::uint32_t>(os, e.b);
      io::write_le<std::uint32_t>(os, e.weight);
      io::write_le<std::int32_t>(os, e.bucket);
    }
  }
  {
    std::ofstream os(fs::path(dir) / "hier.bin", std::ios::binary);
    if (!os) throw DataError(msg("cannot write ", dir, "/hier.bin"));
    detail::write_header(os, 2);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.hier.entity_count()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.hier.triples().size()));
    for (const auto& t : g.hier.triples()) {
      io::write_le<std::uint32_t>(os, t.head);
      io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rel));
      io::write_le<std::uint32_t>(os, t.tail);
    }
  }
  {
    nlohmann::json j;
    j["f_min"] = g.bucketizer.f_min;
    j["f_max"] = g.bucketizer.f_max;
    j["T"] = g.bucketizer.buckets;
    std::ofstream os(fs::path(dir) / "bucketizer.json");
    if (!os) throw DataError(msg("cannot write ", dir, "/bucketizer.json"));
    os << j.dump(2) << "\n";
  }
}

inline GraphBundle load_graphs(const std::string& dir) {
  namespace fs = std::filesystem;
  GraphBundle g;
  {
    std::ifstream is(fs::path(dir) / "interaction.bin", std::ios::binary);
    if (!is) throw DataError(msg("cannot open ", dir, "/interaction.bin"));
    detail::read_header(is, 0);
    auto n_entities = io::read_le<std::uint32_t>(is);
    CallInteractionGraph gi(n_entities);
    auto n_edges = io::read_le<std::uint32_t>(is);
    for (std::uint32_t e = 0; e < n_edges; ++e) {
      auto a = io::read_le<std::uint32_t>(is);
      auto b = io::read_le<std::uint32_t>(is);
      if (a >= n_entities || b >= n_entities)
        throw DataError("interaction.bin: entity id out of range");
      gi.add_edge(a, b);
    }
    gi.finalize();
    g.interaction = std::move(gi);
  }
  {
    std::ifstream is(fs::path(dir) / "cooc.bin", std::ios::binary);
    if (!is) throw DataError(msg("cannot open ", dir, "/cooc.bin"));
    detail::read_header(is, 1);
    auto n_entities = io::read_le<std::uint32_t>(is);
    auto n_edges = io::read_le<std::uint32_t>(is);
    std::vector<CoEdge> edges;
    edges.reserve(n_edges);
    for (std::uint32_t e = 0; e < n_edges; ++e) {
      CoEdge edge;
      edge.a = io::read_le<std::uint32_t>(is);
      edge.b = io::read_le<std::uint32_t>(is);
      edge.weight = io::read_le<std::uint32_t>(is);
      edge.bucket = io::read_le<std::int32_t>(is);
      if (edge.a >= n_entities || edge.b >= n_entities)
        throw DataError("cooc.bin: entity id out of range");
      edges.push_back(edge);
    }
    g.cooc = CoOccurrenceGraph(n_entities, std::move(edges));
  }
  {
    std::ifstream is(fs::path(dir) / "hier.bin", std::ios::binary);
    if (!is) throw DataError(msg("cannot open ", dir, "/hier.bin"));
    detail::read_header(is, 2);
    auto n_entities = io::read_le<std::uint32_t>(is);
    auto n_triples = io::read_le<std::uint32_t>(is);
    std::vector<HierTriple> triples;
    triples.reserve(n_triples);
    for (std::uint32_t t = 0; t < n_triples; ++t) {
      HierTriple triple;
      triple.head = io::read_le<std::uint32_t>(is);
      auto rel = io::read_le<std::uint8_t>(is);
      if (rel >= kRelationCount) throw DataError("hier.bin: invalid relation id");
      triple.rel = static_cast<Relation>(rel);
      triple.tail = io::read_le<std::uint32_t>(is);
      if (triple.head >= n_entities || triple.tail >= n_entities)
        throw DataError("hier.bin: entity id out of range");
      triples.push_back(triple);
    }
    g.hier = HierarchyGraph(n_entities, std::move(triples));
  }
  {
    std::ifstream is(fs::path(dir) / "bucketizer.json");
    if (!is) throw DataError(msg("cannot open ", dir, "/bucketizer.json"));
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw DataError("bucketizer.json: malformed JSON");
    g.bucketizer.f_min = j.at("f_min").get<std::uint32_t>();
    g.bucketizer.f_max = j.at("f_max").get<std::uint32_t>();
    g.bucketizer.buckets = j.at("T").get<std::uint32_t>();
  }
  return g;
}

}  // namespace mega
