#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mega/adam.hpp"
#include "mega/common.hpp"
#include "mega/graphs.hpp"
#include "mega/tape.hpp"

namespace mega {

// ---------------------------------------------------------------------------
// Ablation variants
// ---------------------------------------------------------------------------

enum class Ablation : std::uint8_t {
  None = 0,  // full model
  NoHs = 1,  // drop hierarchical structure view
  NoCo = 2,  // drop co-occurrence view
  NoHc = 3,  // local (call interaction) view only
};

inline const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoHs: return "no-hs";
    case Ablation::NoCo: return "no-co";
    case Ablation::NoHc: return "no-hc";
  }
  return "?";
}

inline Ablation parse_ablation(std::string_view s) {
  if (s == "none") return Ablation::None;
  if (s == "no-hs") return Ablation::NoHs;
  if (s == "no-co") return Ablation::NoCo;
  if (s == "no-hc") return Ablation::NoHc;
  throw DataError(msg("unknown ablation \"", s, "\" (expected none|no-hs|no-co|no-hc)"));
}

inline bool uses_cooc(Ablation a) { return a == Ablation::None || a == Ablation::NoHs; }
inline bool uses_hier(Ablation a) { return a == Ablation::None || a == Ablation::NoCo; }

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct HopConfig {
  std::size_t hops = 1;       // max hop index L; L+1 hop vectors per view
  std::size_t set_size = 16;  // fixed triple-sample size per hop
};

/// All trainable tensors with paired gradient buffers, in a fixed order so
/// the optimizer, checkpoints and gradient checks can enumerate them.
class ModelParams {
 public:
  enum Entry : std::size_t {
    kEntityEmb = 0,
    kFreqEmb,
    kRelEmb,
    kCoocW1, kCoocB1, kCoocW2, kCoocB2, kCoocW3, kCoocB3,
    kHierW1, kHierB1, kHierW2, kHierB2, kHierW3, kHierB3,
    kEntryCount,
  };

  struct Slot {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  ModelParams() = default;

  static ModelParams with_shapes(std::size_t n_entities, std::size_t n_buckets,
                                 std::size_t dim) {
    if (dim == 0) throw DataError("model: embedding dim must be > 0");
    ModelParams p;
    p.dim_ = dim;
    auto slot = [&](const char* name, std::vector<std::size_t> shape) {
      Slot s;
      s.name = name;
      s.value = Tensor::zeros(shape);
      s.grad = Tensor::zeros(std::move(shape));
      p.slots_.push_back(std::move(s));
    };
    slot("entity_emb", {n_entities, dim});
    slot("freq_emb", {n_buckets, dim});
    slot("rel_emb", {kRelationCount, dim});
    for (const char* prefix : {"mlp_cooc", "mlp_hier"}) {
      slot(msg(prefix, ".w1").c_str(), {dim, 2 * dim});
      slot(msg(prefix, ".b1").c_str(), {dim});
      slot(msg(prefix, ".w2").c_str(), {dim, dim});
      slot(msg(prefix, ".b2").c_str(), {dim});
      slot(msg(prefix, ".w3").c_str(), {1, dim});
      slot(msg(prefix, ".b3").c_str(), {1});
    }
    return p;
  }

  /// Scaled-uniform init on all weight tables (variance 2/(fan_in+fan_out),
  /// fan_in = columns, fan_out = rows); biases stay zero.
  static ModelParams init(std::size_t n_entities, std::size_t n_buckets, std::size_t dim,
                          std::uint64_t seed) {
    ModelParams p = with_shapes(n_entities, n_buckets, dim);
    auto rng = make_rng(seed, fnv1a64("xavier-init"));
    for (auto& s : p.slots_) {
      if (s.value.shape.size() != 2) continue;  // biases
      double fan_in = static_cast<double>(s.value.shape[1]);
      double fan_out = static_cast<double>(s.value.shape[0]);
      double a = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-a, a);
      for (auto& v : s.value.data) v = dist(rng);
    }
    return p;
  }

  std::size_t dim() const { return dim_; }
  void set_dim(std::size_t d) { dim_ = d; }

  Slot& slot(Entry e) { return slots_.at(e); }
  const Slot& slot(Entry e) const { return slots_.at(e); }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

  std::size_t entity_count() const { return slot(kEntityEmb).value.shape[0]; }
  std::size_t bucket_count() const { return slot(kFreqEmb).value.shape[0]; }

  void zero_grads() {
    for (auto& s : slots_) s.grad.data.assign(s.grad.data.size(), 0.0);
  }

  std::vector<Tensor*> values() {
    std::vector<Tensor*> out;
    for (auto& s : slots_) out.push_back(&s.value);
    return out;
  }
  std::vector<const Tensor*> grads() const {
    std::vector<const Tensor*> out;
    for (const auto& s : slots_) out.push_back(&s.grad);
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Slot> slots_;
};

// ---------------------------------------------------------------------------
// Triple sampling
// ---------------------------------------------------------------------------

/// Directed co-occurrence triple (head, frequency bucket, tail).
struct CoTriple {
  std::uint32_t head = 0;
  std::uint32_t bucket = 0;
  std::uint32_t tail = 0;
};

/// Uniform with-replacement sample of `set_size` outgoing triples of the seed
/// set; empty when the seeds have no outgoing triples.
inline std::vector<CoTriple> sample_cooc_triples(std::span<const std::uint32_t> seeds,
                                                 const CoOccurrenceGraph& graph,
                                                 std::size_t set_size, std::mt19937_64& rng) {
  if (set_size < 1) throw DataError("sample_triples: set_size must be >= 1");
  std::vector<CoTriple> pool;
  for (auto s : seeds) {
    for (auto e : graph.incident(s)) {
      const CoEdge& edge = graph.edges()[e];
      if (edge.bucket < 0) throw NumericError("co-occurrence graph has not been bucketized");
      std::uint32_t other = edge.a == s ? edge.b : edge.a;
      pool.push_back({s, static_cast<std::uint32_t>(edge.bucket), other});
    }
  }
  if (pool.empty()) return {};
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  std::vector<CoTriple> out;
  out.reserve(set_size);
  for (std::size_t k = 0; k < set_size; ++k) out.push_back(pool[dist(rng)]);
  return out;
}

inline std::vector<HierTriple> sample_hier_triples(std::span<const std::uint32_t> seeds,
                                                   const HierarchyGraph& graph,
                                                   std::size_t set_size, std::mt19937_64& rng) {
  if (set_size < 1) throw DataError("sample_triples: set_size must be >= 1");
  std::vector<HierTriple> pool;
  for (auto s : seeds)
    for (auto t : graph.outgoing(s)) pool.push_back(graph.triples()[t]);
  if (pool.empty()) return {};
  std::uniform_int_distribution<std::size_t> dist(0, pool.size() - 1);
  std::vector<HierTriple> out;
  out.reserve(set_size);
  for (std::size_t k = 0; k < set_size; ++k) out.push_back(pool[dist(rng)]);
  return out;
}

namespace detail {

inline std::vector<std::uint32_t> sorted_unique(std::vector<std::uint32_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace detail

/// L+1 hops of sampled co-occurrence triples: hop l samples from the current
/// entity set, then the next entity set is the tails of the sample.
inline std::vector<std::vector<CoTriple>> sample_cooc_hops(std::vector<std::uint32_t> seeds,
                                                           const CoOccurrenceGraph& graph,
                                                           const HopConfig& cfg,
                                                           std::mt19937_64& rng) {
  std::vector<std::vector<CoTriple>> hops;
  hops.reserve(cfg.hops + 1);
  for (std::size_t l = 0; l <= cfg.hops; ++l) {
    auto triples = sample_cooc_triples(seeds, graph, cfg.set_size, rng);
    std::vector<std::uint32_t> next;
    next.reserve(triples.size());
    for (const auto& t : triples) next.push_back(t.tail);
    seeds = detail::sorted_unique(std::move(next));
    hops.push_back(std::move(triples));
  }
  return hops;
}

inline std::vector<std::vector<HierTriple>> sample_hier_hops(std::vector<std::uint32_t> seeds,
                                                             const HierarchyGraph& graph,
                                                             const HopConfig& cfg,
                                                             std::mt19937_64& rng) {
  std::vector<std::vector<HierTriple>> hops;
  hops.reserve(cfg.hops + 1);
  for (std::size_t l = 0; l <= cfg.hops; ++l) {
    auto triples = sample_hier_triples(seeds, graph, cfg.set_size, rng);
    std::vector<std::uint32_t> next;
    next.reserve(triples.size());
    for (const auto& t : triples) next.push_back(t.tail);
    seeds = detail::sorted_unique(std::move(next));
    hops.push_back(std::move(triples));
  }
  return hops;
}

// ---------------------------------------------------------------------------
// Sampled encodings
// ---------------------------------------------------------------------------

/// Frozen sampling for one side (method or API) of a score evaluation. Once
/// built, scoring is a pure function of (encoding, params), which is what
/// gradient checks and the duplicate-implementation oracle rely on.
struct SampledEncoding {
  bool local_is_self = false;            // API side: local view is own row
  std::uint32_t self_gid = 0;            // valid when local_is_self
  std::vector<std::uint32_t> local_seeds;  // method side: called APIs (minus exclude)
  std::vector<std::vector<CoTriple>> cooc_hops;    // empty when view ablated
  std::vector<std::vector<HierTriple>> hier_hops;  // empty when view ablated
};

/// Builds the method-side encoding from an explicit called-API set.
/// `hier_entity` is absent for ad-hoc context queries, which then contribute
/// zero hierarchy hop vectors.
inline SampledEncoding sample_method_like(std::vector<std::uint32_t> called,
                                          std::optional<std::uint32_t> hier_entity,
                                          const GraphBundle& graphs, const HopConfig& cfg,
                                          Ablation ablation, std::mt19937_64& rng) {
  SampledEncoding enc;
  enc.local_seeds = detail::sorted_unique(std::move(called));
  if (uses_cooc(ablation)) enc.cooc_hops = sample_cooc_hops(enc.local_seeds, graphs.cooc, cfg, rng);
  if (uses_hier(ablation)) {
    std::vector<std::uint32_t> seeds;
    if (hier_entity) seeds.push_back(*hier_entity);
    enc.hier_hops = sample_hier_hops(std::move(seeds), graphs.hier, cfg, rng);
  }
  return enc;
}

/// Method side: seeds come from the (training) interaction graph, optionally
/// excluding the target API (leave-one-out during training).
inline SampledEncoding sample_method_side(std::uint32_t method_gid, const GraphBundle& graphs,
                                          const HopConfig& cfg, Ablation ablation,
                                          std::optional<std::uint32_t> exclude_api,
                                          std::mt19937_64& rng) {
  std::vector<std::uint32_t> called;
  for (auto a : graphs.interaction.neighbors(method_gid))
    if (!exclude_api || a != *exclude_api) called.push_back(a);
  return sample_method_like(std::move(called), method_gid, graphs, cfg, ablation, rng);
}

/// API side: local view is the API's own embedding row; hop-0 seeds are {i}.
inline SampledEncoding sample_api_side(std::uint32_t api_gid, const GraphBundle& graphs,
                                       const HopConfig& cfg, Ablation ablation,
                                       std::mt19937_64& rng) {
  SampledEncoding enc;
  enc.local_is_self = true;
  enc.self_gid = api_gid;
  std::vector<std::uint32_t> seeds{api_gid};
  if (uses_cooc(ablation)) enc.cooc_hops = sample_cooc_hops(seeds, graphs.cooc, cfg, rng);
  if (uses_hier(ablation)) enc.hier_hops = sample_hier_hops(seeds, graphs.hier, cfg, rng);
  return enc;
}

struct ScoreContext {
  SampledEncoding u;
  SampledEncoding i;
};

inline ScoreContext sample_score_context(std::uint32_t method_gid, std::uint32_t api_gid,
                                         const GraphBundle& graphs, const HopConfig& cfg,
                                         Ablation ablation, bool exclude_target,
                                         std::mt19937_64& rng) {
  ScoreContext ctx;
  ctx.u = sample_method_side(method_gid, graphs, cfg, ablation,
                             exclude_target ? std::optional<std::uint32_t>(api_gid)
                                            : std::nullopt,
                             rng);
  ctx.i = sample_api_side(api_gid, graphs, cfg, ablation, rng);
  return ctx;
}

// ---------------------------------------------------------------------------
// Differentiable scoring
// ---------------------------------------------------------------------------

/// Binds parameter tensors to tape leaves. Rows are cached so repeated use of
/// the same embedding row shares one leaf; scatter() pushes accumulated leaf
/// gradients back into the paired grad buffers after backward().
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ModelParams& params) : tape_(tape), params_(params) {
    full_.fill(-1);
  }

  Tape::NodeId row(ModelParams::Entry e, std::uint32_t r) {
    std::uint64_t key = (static_cast<std::uint64_t>(e) << 32) | r;
    auto it = row_cache_.find(key);
    if (it != row_cache_.end()) return it->second;
    const Tensor& table = params_.slot(e).value;
    if (table.shape.size() != 2 || r >= table.shape[0])
      throw NumericError(msg("parameter row ", r, " out of range for ", params_.slot(e).name));
    std::size_t d = table.shape[1];
    Tensor v = Tensor::zeros({d});
    std::copy_n(table.data.begin() + r * d, d, v.data.begin());
    Tape::NodeId id = tape_.leaf(std::move(v));
    row_cache_.emplace(key, id);
    rows_.push_back({e, r, id});
    return id;
  }

  Tape::NodeId full(ModelParams::Entry e) {
    if (full_[e] >= 0) return full_[e];
    Tape::NodeId id = tape_.leaf(params_.slot(e).value);
    full_[e] = id;
    fulls_.push_back({e, id});
    return id;
  }

  /// Accumulates tape gradients into `target`'s grad buffers, scaled by
  /// `scale`. `target` must be the params this binder was built over.
  void scatter(ModelParams& target, double scale = 1.0) const {
    if (&target != &params_)
      throw NumericError("ParamBinder::scatter: target is not the bound parameter set");
    for (const auto& [e, r, id] : rows_) {
      Tensor& g = target.slot(e).grad;
      const Tensor& leaf_g = tape_.grad(id);
      std::size_t d = g.shape[1];
      for (std::size_t k = 0; k < d; ++k) g.data[r * d + k] += scale * leaf_g.data[k];
    }
    for (const auto& [e, id] : fulls_) {
      Tensor& g = target.slot(e).grad;
      const Tensor& leaf_g = tape_.grad(id);
      for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += scale * leaf_g.data[k];
    }
  }

 private:
  struct RowRef {
    ModelParams::Entry entry;
    std::uint32_t row;
    Tape::NodeId node;
  };
  struct FullRef {
    ModelParams::Entry entry;
    Tape::NodeId node;
  };

  Tape& tape_;
  const ModelParams& params_;
  std::unordered_map<std::uint64_t, Tape::NodeId> row_cache_;
  std::array<Tape::NodeId, ModelParams::kEntryCount> full_;
  std::vector<RowRef> rows_;
  std::vector<FullRef> fulls_;
};

namespace detail {

inline Tape::NodeId mlp3(Tape& t, ParamBinder& b, bool hier, Tape::NodeId x) {
  using E = ModelParams::Entry;
  E w1 = hier ? E::kHierW1 : E::kCoocW1, b1 = hier ? E::kHierB1 : E::kCoocB1;
  E w2 = hier ? E::kHierW2 : E::kCoocW2, b2 = hier ? E::kHierB2 : E::kCoocB2;
  E w3 = hier ? E::kHierW3 : E::kCoocW3, b3 = hier ? E::kHierB3 : E::kCoocB3;
  Tape::NodeId h1 = t.relu(t.add(t.matvec(b.full(w1), x), b.full(b1)));
  Tape::NodeId h2 = t.relu(t.add(t.matvec(b.full(w2), h1), b.full(b2)));
  return t.add(t.matvec(b.full(w3), h2), b.full(b3));
}

}  // namespace detail

struct AttentionNodes {
  Tape::NodeId output = -1;   // d-vector
  Tape::NodeId weights = -1;  // softmax over the sampled set
};

/// Frequency-aware attention: score_k = mlp((e_head ⊙ e_tail) || e_bucket),
/// weights = softmax(scores), output = Σ_k weight_k · e_tail_k.
inline AttentionNodes attend_cooc(Tape& t, ParamBinder& b, std::span<const CoTriple> triples) {
  if (triples.empty()) throw NumericError("attend_cooc: empty triple set");
  using E = ModelParams::Entry;
  std::vector<Tape::NodeId> scores, tails;
  scores.reserve(triples.size());
  tails.reserve(triples.size());
  for (const auto& tr : triples) {
    Tape::NodeId head = b.row(E::kEntityEmb, tr.head);
    Tape::NodeId tail = b.row(E::kEntityEmb, tr.tail);
    Tape::NodeId freq = b.row(E::kFreqEmb, tr.bucket);
    std::array<Tape::NodeId, 2> parts{t.elemwise_mul(head, tail), freq};
    scores.push_back(detail::mlp3(t, b, false, t.concat(parts)));
    tails.push_back(tail);
  }
  AttentionNodes out;
  out.weights = t.softmax(t.concat(scores));
  std::vector<Tape::NodeId> terms;
  terms.reserve(tails.size());
  for (std::size_t k = 0; k < tails.size(); ++k)
    terms.push_back(t.scale(tails[k], t.pick(out.weights, k)));
  out.output = t.sum(terms);
  return out;
}

/// Structure-aware attention: score_k = mlp(e_head || e_rel),
/// weights = softmax(scores), output = Σ_k weight_k · e_tail_k.
inline AttentionNodes attend_hier(Tape& t, ParamBinder& b, std::span<const HierTriple> triples) {
  if (triples.empty()) throw NumericError("attend_hier: empty triple set");
  using E = ModelParams::Entry;
  std::vector<Tape::NodeId> scores, tails;
  scores.reserve(triples.size());
  tails.reserve(triples.size());
  for (const auto& tr : triples) {
    Tape::NodeId head = b.row(E::kEntityEmb, tr.head);
    Tape::NodeId rel = b.row(E::kRelEmb, static_cast<std::uint32_t>(tr.rel));
    Tape::NodeId tail = b.row(E::kEntityEmb, tr.tail);
    std::array<Tape::NodeId, 2> parts{head, rel};
    scores.push_back(detail::mlp3(t, b, true, t.concat(parts)));
    tails.push_back(tail);
  }
  AttentionNodes out;
  out.weights = t.softmax(t.concat(scores));
  std::vector<Tape::NodeId> terms;
  terms.reserve(tails.size());
  for (std::size_t k = 0; k < tails.size(); ++k)
    terms.push_back(t.scale(tails[k], t.pick(out.weights, k)));
  out.output = t.sum(terms);
  return out;
}

/// Local view: mean of called-API rows for methods (zero vector when the set
/// is empty), the entity's own row for APIs.
inline Tape::NodeId encode_local(Tape& t, ParamBinder& b, const SampledEncoding& enc,
                                 std::size_t dim) {
  using E = ModelParams::Entry;
  if (enc.local_is_self) return b.row(E::kEntityEmb, enc.self_gid);
  if (enc.local_seeds.empty()) return t.leaf_zeros(dim);
  std::vector<Tape::NodeId> rows;
  rows.reserve(enc.local_seeds.size());
  for (auto a : enc.local_seeds) rows.push_back(b.row(E::kEntityEmb, a));
  return t.mean(rows);
}

/// Concatenated multi-view representation: local || cooc hops || hier hops,
/// with ablated views omitted. Empty hop samples contribute zero vectors.
inline Tape::NodeId encode_entity(Tape& t, ParamBinder& b, const SampledEncoding& enc,
                                  std::size_t dim, Ablation ablation) {
  std::vector<Tape::NodeId> blocks;
  blocks.push_back(encode_local(t, b, enc, dim));
  if (uses_cooc(ablation))
    for (const auto& hop : enc.cooc_hops)
      blocks.push_back(hop.empty() ? t.leaf_zeros(dim) : attend_cooc(t, b, hop).output);
  if (uses_hier(ablation))
    for (const auto& hop : enc.hier_hops)
      blocks.push_back(hop.empty() ? t.leaf_zeros(dim) : attend_hier(t, b, hop).output);
  return t.concat(blocks);
}

/// Inner product of the two fused representations.
inline Tape::NodeId score_on_tape(Tape& t, ParamBinder& b, const ScoreContext& ctx,
                                  std::size_t dim, Ablation ablation) {
  Tape::NodeId eu = encode_entity(t, b, ctx.u, dim, ablation);
  Tape::NodeId ei = encode_entity(t, b, ctx.i, dim, ablation);
  return t.dot(eu, ei);
}

/// Non-training evaluation of one sampled score.
inline double score_sampled(const ScoreContext& ctx, const ModelParams& params,
                            Ablation ablation) {
  Tape tape;
  ParamBinder binder(tape, params);
  return tape.value(score_on_tape(tape, binder, ctx, params.dim(), ablation)).data[0];
}

/// Samples and scores one (method, API) pair in one call.
inline double score_pair(std::uint32_t method_gid, std::uint32_t api_gid,
                         const GraphBundle& graphs, const ModelParams& params,
                         const HopConfig& cfg, Ablation ablation, bool exclude_target,
                         std::mt19937_64& rng) {
  ScoreContext ctx =
      sample_score_context(method_gid, api_gid, graphs, cfg, ablation, exclude_target, rng);
  return score_sampled(ctx, params, ablation);
}

}  // namespace mega
