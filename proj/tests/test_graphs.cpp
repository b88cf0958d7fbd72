#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "mega/graphs.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mega;

namespace {

using support::api_gid;
using support::corpus_from_sequences;

Corpus random_corpus(std::mt19937_64& rng, std::size_t max_methods = 20,
                     std::size_t max_len = 10) {
  std::uniform_int_distribution<std::size_t> n_methods(1, max_methods);
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> api(0, 6);
  std::vector<std::vector<int>> seqs(n_methods(rng));
  bool any = false;
  for (auto& s : seqs) {
    s.resize(len(rng));
    for (auto& a : s) a = api(rng);
    any = any || !s.empty();
  }
  if (!any) seqs.push_back({0});
  return corpus_from_sequences(seqs);
}

}  // namespace

TEST_CASE("interaction edges have set semantics") {
  Corpus c = corpus_from_sequences({{0, 1, 0}});
  auto g = build_interaction(c);
  auto m = c.methods[0].method.index;
  CHECK(g.neighbors(m).size() == 2);
  CHECK(g.edge_count() == 2);
  CHECK(g.has_edge(m, api_gid(c, 0)));
  CHECK(g.has_edge(m, api_gid(c, 1)));
}

TEST_CASE("a method with no calls contributes no interaction edges") {
  Corpus c = corpus_from_sequences({{}, {0}});
  auto g = build_interaction(c);
  CHECK(g.neighbors(c.methods[0].method.index).empty());
  CHECK(g.edge_count() == 1);
}

TEST_CASE("api-side adjacency counts distinct calling methods") {
  Corpus c = corpus_from_sequences({{0}, {0}});
  auto g = build_interaction(c);
  CHECK(g.neighbors(api_gid(c, 0)).size() == 2);
}

TEST_CASE("window-3 co-occurrence connects all pairs of a 4-call sequence") {
  Corpus c = corpus_from_sequences({{0, 1, 2, 3}});
  auto g = build_cooccurrence(c, 3);
  CHECK(g.edges().size() == 6);
  for (const auto& e : g.edges()) CHECK(e.weight == 1);
}

TEST_CASE("self-pairs are skipped") {
  Corpus c = corpus_from_sequences({{0, 0, 1}});
  auto g = build_cooccurrence(c, 1);
  REQUIRE(g.edges().size() == 1);
  CHECK(g.weight(api_gid(c, 0), api_gid(c, 1)) == 1);
}

TEST_CASE("weights accumulate across sequences") {
  Corpus c = corpus_from_sequences({{0, 1}, {1, 0}});
  auto g = build_cooccurrence(c, 1);
  CHECK(g.weight(api_gid(c, 0), api_gid(c, 1)) == 2);
  CHECK(g.weight(api_gid(c, 1), api_gid(c, 0)) == 2);
}

TEST_CASE("co-occurrence weights match the brute-force pair counter") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    Corpus c = random_corpus(rng);
    for (std::size_t eps : {1, 2, 3}) {
      auto g = build_cooccurrence(c, eps);
      auto expected = oracle::count_pairs(c, eps);
      REQUIRE(g.edges().size() == expected.size());
      for (const auto& [pair, w] : expected) CHECK(g.weight(pair.first, pair.second) == w);
    }
  }
}

TEST_CASE("bucketize follows the equidistant rule") {
  // f_min=1, f_max=30, T=15 -> width 2; f=5 lands in bucket 2.
  Bucketizer bz{1, 30, 15};
  CHECK(bz.bucket(5) == 2);
  CHECK(bz.bucket(1) == 0);
  CHECK(bz.bucket(30) == 14);
}

TEST_CASE("uniform weights collapse into bucket zero") {
  Corpus c = corpus_from_sequences({{0, 1}, {2, 3}});
  auto g = build_cooccurrence(c, 1);
  auto bz = bucketize(g, 7);
  CHECK(bz.f_min == bz.f_max);
  for (const auto& e : g.edges()) CHECK(e.bucket == 0);
}

TEST_CASE("the maximum weight lands in the last bucket") {
  Corpus c = corpus_from_sequences({{0, 1}, {0, 1}, {0, 1}, {2, 3}});
  auto g = build_cooccurrence(c, 1);
  auto bz = bucketize(g, 3);
  CHECK(bz.bucket(bz.f_max) == 2);
  CHECK(g.bucket(api_gid(c, 0), api_gid(c, 1)) == 2);
}

TEST_CASE("bucketizing an empty graph is an error") {
  Corpus c = corpus_from_sequences({{0}});
  auto g = build_cooccurrence(c, 3);
  CHECK_THROWS_AS(bucketize(g, 5), DataError);
}

TEST_CASE("bucket assignment is monotone in the weight") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint32_t> fd(1, 100);
  for (int trial = 0; trial < 50; ++trial) {
    std::uint32_t lo = fd(rng), hi = fd(rng);
    if (lo > hi) std::swap(lo, hi);
    Bucketizer bz{lo, hi, 1 + fd(rng) % 20};
    for (std::uint32_t f = lo; f < hi; ++f) CHECK(bz.bucket(f) <= bz.bucket(f + 1));
    CHECK(bz.bucket(lo) == 0);
    CHECK(bz.bucket(hi) <= bz.buckets - 1);
    // The top weight fills the last bucket whenever there are at least as
    // many distinct weights as buckets.
    if (hi - lo + 1 >= bz.buckets) CHECK(bz.bucket(hi) == bz.buckets - 1);
  }
}

TEST_CASE("hierarchy triples follow the worked example") {
  std::istringstream ms(
      R"json({"project":"com.orange","package":"g","class":"twitter","method":"keyBasedTweents()","calls":[]})json");
  Corpus c = ingest(ms);
  auto g = build_hierarchy(c);
  REQUIRE(g.triples().size() == 2);
  auto method = c.methods[0].method.index;
  auto klass = c.methods[0].klass.index;
  auto proj = c.methods[0].project.index;
  auto has = [&](HierTriple t) {
    return std::find(g.triples().begin(), g.triples().end(), t) != g.triples().end();
  };
  CHECK(has({method, Relation::BelongToClass, klass}));
  CHECK(has({klass, Relation::BelongToProject, proj}));
  CHECK(c.universe.name(klass) == "twitter");
  CHECK(c.universe.name(proj) == "com.orange");
}

TEST_CASE("each api contributes exactly two hierarchy triples") {
  Corpus c = corpus_from_sequences({{0}});
  auto g = build_hierarchy(c);
  std::size_t api_side = 0;
  for (const auto& t : g.triples())
    if (c.universe.kind(t.head) == EntityKind::Api ||
        (c.universe.kind(t.head) == EntityKind::Class && t.rel == Relation::BelongToPackage))
      ++api_side;
  CHECK(api_side == 2);
}

TEST_CASE("shared classes deduplicate belong-to-project triples") {
  Corpus c = corpus_from_sequences({{0}, {1}});  // same project and class
  auto g = build_hierarchy(c);
  std::size_t class_to_project = 0;
  for (const auto& t : g.triples())
    if (t.rel == Relation::BelongToProject) ++class_to_project;
  CHECK(class_to_project == 1);
}

TEST_CASE("every hierarchy triple has an allowed kind signature") {
  Corpus c = synth_corpus(30, 20, 4, 9);
  auto g = build_hierarchy(c);
  for (const auto& t : g.triples()) {
    EntityKind h = c.universe.kind(t.head);
    EntityKind tl = c.universe.kind(t.tail);
    bool ok = (t.rel == Relation::BelongToClass &&
               (h == EntityKind::Method || h == EntityKind::Api) && tl == EntityKind::Class) ||
              (t.rel == Relation::BelongToProject && h == EntityKind::Class &&
               tl == EntityKind::Project) ||
              (t.rel == Relation::BelongToPackage && h == EntityKind::Class &&
               tl == EntityKind::Package);
    CHECK(ok);
  }
}

TEST_CASE("graph bundle serialization round-trips") {
  Corpus c = synth_corpus(25, 16, 3, 21);
  GraphBundle g;
  g.interaction = build_interaction(c);
  g.cooc = build_cooccurrence(c, 3);
  g.bucketizer = bucketize(g.cooc, 5);
  g.hier = build_hierarchy(c);

  auto dir = std::filesystem::temp_directory_path() / "mega_graphs_test";
  std::filesystem::remove_all(dir);
  save_graphs(dir.string(), g);
  GraphBundle back = load_graphs(dir.string());

  CHECK(back.interaction.edge_count() == g.interaction.edge_count());
  REQUIRE(back.cooc.edges().size() == g.cooc.edges().size());
  for (std::size_t e = 0; e < g.cooc.edges().size(); ++e) {
    CHECK(back.cooc.edges()[e].a == g.cooc.edges()[e].a);
    CHECK(back.cooc.edges()[e].weight == g.cooc.edges()[e].weight);
    CHECK(back.cooc.edges()[e].bucket == g.cooc.edges()[e].bucket);
  }
  CHECK(back.hier.triples() == g.hier.triples());
  CHECK(back.bucketizer.f_min == g.bucketizer.f_min);
  CHECK(back.bucketizer.f_max == g.bucketizer.f_max);
  CHECK(back.bucketizer.buckets == g.bucketizer.buckets);
  for (std::uint32_t gid = 0; gid < c.universe.size(); ++gid)
    CHECK(back.interaction.neighbors(gid) == g.interaction.neighbors(gid));
  std::filesystem::remove_all(dir);
}
