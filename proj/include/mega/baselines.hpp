#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mega/common.hpp"
#include "mega/evaluation.hpp"
#include "mega/graphs.hpp"

namespace mega {

/// Deliberately simple recommenders for harness sanity checks.
enum class BaselineKind : std::uint8_t {
  Popularity,     // rank by training call count
  Cooccurrence,   // rank by summed raw co-occurrence weight with the context
};

inline const char* baseline_name(BaselineKind k) {
  return k == BaselineKind::Popularity ? "popularity" : "cooccurrence";
}

inline BaselineKind parse_baseline(std::string_view s) {
  if (s == "popularity") return BaselineKind::Popularity;
  if (s == "cooccurrence") return BaselineKind::Cooccurrence;
  throw DataError(msg("unknown baseline \"", s, "\" (expected popularity|cooccurrence)"));
}

/// Pure function of (graphs, context): no RNG anywhere. Context APIs are
/// excluded from the candidates; ties break by ascending id.
inline RankedList baseline_rank(BaselineKind kind, std::span<const std::uint32_t> context,
                                const GraphBundle& graphs,
                                std::span<const std::uint32_t> api_gids, std::size_t k) {
  std::vector<std::uint32_t> ctx(context.begin(), context.end());
  std::sort(ctx.begin(), ctx.end());
  RankedList out;
  out.items.reserve(api_gids.size());
  for (std::uint32_t api : api_gids) {
    if (std::binary_search(ctx.begin(), ctx.end(), api)) continue;
    double score = 0.0;
    if (kind == BaselineKind::Popularity) {
      score = static_cast<double>(graphs.interaction.neighbors(api).size());
    } else {
      for (std::uint32_t c : context) score += graphs.cooc.weight(c, api);
    }
    out.items.push_back({api, score});
  }
  std::sort(out.items.begin(), out.items.end(), [](const RankedItem& x, const RankedItem& y) {
    return x.score != y.score ? x.score > y.score : x.api < y.api;
  });
  if (out.items.size() > k) out.items.resize(k);
  return out;
}

/// Runs a baseline over the eval split through the shared metrics pipeline.
inline MetricsReport evaluate_baseline(BaselineKind kind, const Corpus& corpus,
                                       const GraphBundle& graphs,
                                       std::span<const std::size_t> ks,
                                       std::size_t freq_threshold = 3) {
  SplitResult sr = make_split(corpus);
  std::size_t k_max = 0;
  for (auto k : ks) k_max = std::max(k_max, k);
  std::vector<RankedList> lists;
  lists.reserve(sr.split.cases.size());
  for (const auto& c : sr.split.cases) {
    RankedList l = baseline_rank(kind, graphs.interaction.neighbors(c.method), graphs,
                                 corpus.universe.of_kind(EntityKind::Api), k_max);
    l.method = c.method;
    lists.push_back(std::move(l));
  }
  MetricsReport report = build_report(lists, sr.split, graphs.interaction, ks, freq_threshold);
  report.metadata["baseline"] = baseline_name(kind);
  report.metadata["freq_threshold"] = freq_threshold;
  return report;
}

}  // namespace mega
