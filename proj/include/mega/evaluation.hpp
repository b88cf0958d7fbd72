#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mega/common.hpp"
#include "mega/graphs.hpp"
#include "mega/model.hpp"
#include "mega/training.hpp"

namespace mega {

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

struct RankedItem {
  std::uint32_t api = 0;
  double score = 0.0;
};

struct RankedList {
  std::uint32_t method = 0;
  std::vector<RankedItem> items;  // scores non-increasing, ties by ascending id
};

namespace detail {

inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, threads);
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn]() {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Scores every API outside the method's visible context and returns the top
/// `k_max` by (score desc, id asc). The method-side encoding is sampled once;
/// candidate-side sampling streams derive from (seed, method, candidate).
inline RankedList rank(std::uint32_t method_gid, const GraphBundle& graphs,
                       const ModelParams& params, const HopConfig& cfg, Ablation ablation,
                       std::span<const std::uint32_t> api_gids, std::size_t k_max,
                       std::uint64_t sample_seed) {
  const auto& context = graphs.interaction.neighbors(method_gid);
  auto rng_u = make_rng(sample_seed, fnv1a64("rank-u"), method_gid);
  SampledEncoding u_enc =
      sample_method_side(method_gid, graphs, cfg, ablation, std::nullopt, rng_u);

  RankedList out;
  out.method = method_gid;
  out.items.reserve(api_gids.size());
  for (std::uint32_t api : api_gids) {
    if (std::binary_search(context.begin(), context.end(), api)) continue;
    auto rng_i = make_rng(sample_seed, fnv1a64("rank-i"), method_gid, api);
    ScoreContext ctx;
    ctx.u = u_enc;
    ctx.i = sample_api_side(api, graphs, cfg, ablation, rng_i);
    out.items.push_back({api, score_sampled(ctx, params, ablation)});
  }
  std::sort(out.items.begin(), out.items.end(), [](const RankedItem& x, const RankedItem& y) {
    return x.score != y.score ? x.score > y.score : x.api < y.api;
  });
  if (out.items.size() > k_max) out.items.resize(k_max);
  return out;
}

inline std::vector<RankedList> rank_split(const EvalSplit& split, const GraphBundle& graphs,
                                          const ModelParams& params, const HopConfig& cfg,
                                          Ablation ablation,
                                          std::span<const std::uint32_t> api_gids,
                                          std::size_t k_max, std::uint64_t sample_seed,
                                          std::size_t threads = 1) {
  std::vector<RankedList> lists(split.cases.size());
  detail::parallel_for(split.cases.size(), threads, [&](std::size_t i) {
    lists[i] = rank(split.cases[i].method, graphs, params, cfg, ablation, api_gids, k_max,
                    sample_seed);
  });
  return lists;
}

// ---------------------------------------------------------------------------
// Metrics (SR@K, P@K, R@K)
// ---------------------------------------------------------------------------

struct MetricRow {
  double sr = 0.0;
  double p = 0.0;
  double r = 0.0;
};

struct MetricsBlock {
  std::size_t n_methods = 0;
  std::map<std::size_t, MetricRow> at_k;
};

/// SR@K = fraction of methods with at least one match in the top K;
/// P@K and R@K are means over methods of |MATCH|/K and |MATCH|/|GT|.
inline MetricsBlock compute_metrics(
    const std::vector<RankedList>& lists,
    const std::unordered_map<std::uint32_t, std::vector<std::uint32_t>>& ground_truth,
    std::span<const std::size_t> ks) {
  MetricsBlock block;
  block.n_methods = ground_truth.size();
  if (ground_truth.empty()) return block;
  std::unordered_map<std::uint32_t, const RankedList*> by_method;
  for (const auto& l : lists) by_method.emplace(l.method, &l);
  for (std::size_t k : ks) block.at_k.emplace(k, MetricRow{});

  for (const auto& [method, gt] : ground_truth) {
    auto it = by_method.find(method);
    if (it == by_method.end())
      throw DataError(msg("metrics: no ranked list for method ", method));
    const auto& items = it->second->items;
    std::unordered_set<std::uint32_t> gt_set(gt.begin(), gt.end());
    for (std::size_t k : ks) {
      std::size_t match = 0;
      for (std::size_t j = 0; j < std::min(k, items.size()); ++j)
        if (gt_set.count(items[j].api)) ++match;
      MetricRow& row = block.at_k.at(k);
      if (match > 0) row.sr += 1.0;
      row.p += static_cast<double>(match) / static_cast<double>(k);
      row.r += static_cast<double>(match) / static_cast<double>(gt_set.size());
    }
  }
  for (auto& [k, row] : block.at_k) {
    row.sr /= static_cast<double>(block.n_methods);
    row.p /= static_cast<double>(block.n_methods);
    row.r /= static_cast<double>(block.n_methods);
  }
  return block;
}

/// Number of distinct training methods calling the API.
inline std::size_t api_frequency(std::uint32_t api, const CallInteractionGraph& interaction) {
  return interaction.neighbors(api).size();
}

struct MetricsReport {
  nlohmann::json metadata;
  std::vector<std::size_t> ks;
  MetricsBlock overall;
  std::optional<MetricsBlock> low_freq;   // GT restricted to frequency <= threshold
  std::optional<MetricsBlock> high_freq;  // complement slice
};

/// Shared metrics pipeline for model and baseline ranked lists: overall
/// metrics plus the two frequency slices. Methods whose restricted ground
/// truth is empty drop out of a slice; an empty slice is reported as null.
inline MetricsReport build_report(const std::vector<RankedList>& lists, const EvalSplit& split,
                                  const CallInteractionGraph& train_interaction,
                                  std::span<const std::size_t> ks,
                                  std::size_t freq_threshold = 3) {
  MetricsReport report;
  report.ks.assign(ks.begin(), ks.end());

  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> gt_all, gt_low, gt_high;
  for (const auto& c : split.cases) {
    gt_all.emplace(c.method, c.ground_truth);
    std::vector<std::uint32_t> low, high;
    for (auto g : c.ground_truth)
      (api_frequency(g, train_interaction) <= freq_threshold ? low : high).push_back(g);
    if (!low.empty()) gt_low.emplace(c.method, std::move(low));
    if (!high.empty()) gt_high.emplace(c.method, std::move(high));
  }
  report.overall = compute_metrics(lists, gt_all, ks);
  if (!gt_low.empty()) report.low_freq = compute_metrics(lists, gt_low, ks);
  if (!gt_high.empty()) report.high_freq = compute_metrics(lists, gt_high, ks);
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json block_json(const MetricsBlock& b) {
  nlohmann::json j;
  j["n_methods"] = b.n_methods;
  nlohmann::json at;
  for (const auto& [k, row] : b.at_k) {
    nlohmann::json r;
    r["sr"] = row.sr;
    r["p"] = row.p;
    r["r"] = row.r;
    at[std::to_string(k)] = r;
  }
  j["at_k"] = at;
  return j;
}

}  // namespace detail

inline nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json j;
  j["metadata"] = r.metadata;
  j["ks"] = r.ks;
  j["overall"] = detail::block_json(r.overall);
  j["low_freq"] = r.low_freq ? detail::block_json(*r.low_freq) : nlohmann::json(nullptr);
  j["high_freq"] = r.high_freq ? detail::block_json(*r.high_freq) : nlohmann::json(nullptr);
  return j;
}

/// Flat rows: variant,K,slice,SR,P,R. Null slices produce no rows.
inline std::string report_csv(const std::string& variant, const MetricsReport& r,
                              bool header = true) {
  std::string out;
  if (header) out += "variant,K,slice,SR,P,R\n";
  auto emit = [&](const char* slice, const MetricsBlock& b) {
    for (const auto& [k, row] : b.at_k)
      out += msg(variant, ",", k, ",", slice, ",", row.sr, ",", row.p, ",", row.r, "\n");
  };
  emit("overall", r.overall);
  if (r.low_freq) emit("low", *r.low_freq);
  if (r.high_freq) emit("high", *r.high_freq);
  return out;
}

// ---------------------------------------------------------------------------
// Whole-split evaluation and ablation comparison
// ---------------------------------------------------------------------------

inline MetricsReport evaluate_model(const Corpus& corpus, const GraphBundle& graphs,
                                    const Checkpoint& ckpt, std::span<const std::size_t> ks,
                                    std::size_t freq_threshold = 3, std::size_t threads = 1) {
  if (corpus.universe.fingerprint() != ckpt.vocab_hash)
    throw DataError("evaluate: corpus vocabulary does not match the checkpoint");
  SplitResult sr = make_split(corpus);
  std::size_t k_max = 0;
  for (auto k : ks) k_max = std::max(k_max, k);
  auto lists = rank_split(sr.split, graphs, ckpt.params, ckpt.hop_config(),
                          ckpt.config.ablation, corpus.universe.of_kind(EntityKind::Api),
                          k_max, ckpt.config.seed, threads);
  MetricsReport report = build_report(lists, sr.split, graphs.interaction, ks, freq_threshold);
  report.metadata["ablation"] = ablation_name(ckpt.config.ablation);
  report.metadata["seed"] = ckpt.config.seed;
  report.metadata["dim"] = ckpt.config.dim;
  report.metadata["hops"] = ckpt.config.hops;
  report.metadata["set_size"] = ckpt.config.set_size;
  report.metadata["freq_threshold"] = freq_threshold;
  return report;
}

/// Trains one model per ablation variant with a shared seed and split, then
/// evaluates all of them over the same test set.
inline std::vector<std::pair<Ablation, MetricsReport>> ablate_compare(
    const Corpus& corpus, const GraphBundle& graphs, const TrainConfig& base,
    std::span<const Ablation> variants, std::span<const std::size_t> ks,
    std::size_t freq_threshold = 3, std::size_t threads = 1, LogSink sink = nullptr) {
  std::vector<std::pair<Ablation, MetricsReport>> out;
  for (Ablation variant : variants) {
    TrainConfig cfg = base;
    cfg.ablation = variant;
    TrainResult tr = train(corpus, graphs, cfg, sink);
    out.emplace_back(variant,
                     evaluate_model(corpus, graphs, tr.checkpoint, ks, freq_threshold, threads));
  }
  return out;
}

}  // namespace mega
