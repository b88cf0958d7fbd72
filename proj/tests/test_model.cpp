#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mega/model.hpp"
#include "mega/training.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mega;
using Catch::Approx;
using support::api_gid;
using support::corpus_from_sequences;
using support::make_bundle;
using support::method_gid;

namespace {

std::vector<double> node_vec(const Tape& t, Tape::NodeId id) { return t.value(id).data; }

std::vector<double> entity_row(const ModelParams& p, std::uint32_t gid) {
  return oracle::row_of(p, ModelParams::kEntityEmb, gid);
}

}  // namespace

TEST_CASE("local view of a method averages its called-API rows") {
  Corpus c = corpus_from_sequences({{0}, {0, 1}});
  GraphBundle g = make_bundle(c);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 6, 3);
  auto rng = make_rng(1);

  SECTION("singleton set returns the row itself") {
    auto enc = sample_method_side(method_gid(c, 0), g, {1, 4}, Ablation::NoHc, std::nullopt, rng);
    Tape t;
    ParamBinder b(t, params);
    CHECK(node_vec(t, encode_local(t, b, enc, 6)) == entity_row(params, api_gid(c, 0)));
  }

  SECTION("two calls average elementwise") {
    auto enc = sample_method_side(method_gid(c, 1), g, {1, 4}, Ablation::NoHc, std::nullopt, rng);
    Tape t;
    ParamBinder b(t, params);
    auto got = node_vec(t, encode_local(t, b, enc, 6));
    auto r0 = entity_row(params, api_gid(c, 0));
    auto r1 = entity_row(params, api_gid(c, 1));
    for (std::size_t k = 0; k < got.size(); ++k)
      CHECK(got[k] == Approx((r0[k] + r1[k]) / 2.0).margin(1e-15));
  }

  SECTION("excluding the only call leaves a zero vector") {
    auto enc = sample_method_side(method_gid(c, 0), g, {1, 4}, Ablation::NoHc,
                                  api_gid(c, 0), rng);
    Tape t;
    ParamBinder b(t, params);
    CHECK(node_vec(t, encode_local(t, b, enc, 6)) == std::vector<double>(6, 0.0));
  }
}

TEST_CASE("triple sampling is with-replacement, empty-safe and deterministic") {
  Corpus c = corpus_from_sequences({{0, 1}});  // one cooc edge
  GraphBundle g = make_bundle(c, 1, 2);

  SECTION("a pool of one triple fills the whole sample") {
    auto rng = make_rng(9);
    std::vector<std::uint32_t> seeds{api_gid(c, 0)};
    auto s = sample_cooc_triples(seeds, g.cooc, 4, rng);
    REQUIRE(s.size() == 4);
    for (const auto& t : s) {
      CHECK(t.head == api_gid(c, 0));
      CHECK(t.tail == api_gid(c, 1));
    }
  }

  SECTION("an empty pool yields an empty sample") {
    auto rng = make_rng(9);
    std::vector<std::uint32_t> seeds{method_gid(c, 0)};  // methods have no cooc edges
    CHECK(sample_cooc_triples(seeds, g.cooc, 4, rng).empty());
  }

  SECTION("a fixed seed reproduces the sample") {
    Corpus big = synth_corpus(20, 12, 3, 4);
    GraphBundle gb = make_bundle(big, 3, 5);
    std::vector<std::uint32_t> seeds = big.universe.of_kind(EntityKind::Api);
    auto r1 = make_rng(42), r2 = make_rng(42);
    auto s1 = sample_cooc_triples(seeds, gb.cooc, 16, r1);
    auto s2 = sample_cooc_triples(seeds, gb.cooc, 16, r2);
    REQUIRE(s1.size() == s2.size());
    for (std::size_t k = 0; k < s1.size(); ++k) {
      CHECK(s1[k].head == s2[k].head);
      CHECK(s1[k].tail == s2[k].tail);
    }
  }
}

TEST_CASE("co-occurrence attention reduces to the tail row for degenerate sets") {
  Corpus c = corpus_from_sequences({{0, 1}});
  GraphBundle g = make_bundle(c, 1, 2);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 5, 17);
  CoTriple triple{api_gid(c, 0), 0, api_gid(c, 1)};

  SECTION("single triple returns e_tail exactly") {
    Tape t;
    ParamBinder b(t, params);
    std::vector<CoTriple> set{triple};
    auto out = attend_cooc(t, b, set);
    CHECK(node_vec(t, out.output) == entity_row(params, triple.tail));
    CHECK(node_vec(t, out.weights) == std::vector<double>{1.0});
  }

  SECTION("duplicated triples split the weight evenly") {
    Tape t;
    ParamBinder b(t, params);
    std::vector<CoTriple> set{triple, triple};
    auto out = attend_cooc(t, b, set);
    auto expect = entity_row(params, triple.tail);
    auto got = node_vec(t, out.output);
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(got[k] == Approx(expect[k]).margin(1e-12));
    CHECK(node_vec(t, out.weights)[0] == Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("hierarchy attention matches its degenerate cases") {
  Corpus c = corpus_from_sequences({{0}});
  GraphBundle g = make_bundle(c);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 5, 23);
  auto api = api_gid(c, 0);
  auto klass = c.api_meta[0].klass.index;
  auto pkg = c.api_meta[0].package.index;

  SECTION("single triple returns e_tail") {
    Tape t;
    ParamBinder b(t, params);
    std::vector<HierTriple> set{{api, Relation::BelongToClass, klass}};
    auto out = attend_hier(t, b, set);
    CHECK(node_vec(t, out.output) == entity_row(params, klass));
  }

  SECTION("shared (head, relation) with two tails averages the tails") {
    Tape t;
    ParamBinder b(t, params);
    std::vector<HierTriple> set{{api, Relation::BelongToClass, klass},
                                {api, Relation::BelongToClass, pkg}};
    auto out = attend_hier(t, b, set);
    auto r1 = entity_row(params, klass);
    auto r2 = entity_row(params, pkg);
    auto got = node_vec(t, out.output);
    for (std::size_t k = 0; k < got.size(); ++k)
      CHECK(got[k] == Approx((r1[k] + r2[k]) / 2.0).margin(1e-12));
  }
}

TEST_CASE("attention matches the straight-line oracle on random instances") {
  Corpus c = synth_corpus(25, 14, 3, 8);
  GraphBundle g = make_bundle(c, 3, 6);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 7, 31);
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    auto rng = make_rng(100 + trial);
    std::vector<std::uint32_t> seeds = c.universe.of_kind(EntityKind::Api);
    auto cooc_set = sample_cooc_triples(seeds, g.cooc, 9, rng);
    auto hier_set = sample_hier_triples(seeds, g.hier, 9, rng);
    REQUIRE(!cooc_set.empty());
    REQUIRE(!hier_set.empty());

    Tape t;
    ParamBinder b(t, params);
    auto got_c = node_vec(t, attend_cooc(t, b, cooc_set).output);
    auto want_c = oracle::attend_cooc(params, cooc_set);
    auto got_h = node_vec(t, attend_hier(t, b, hier_set).output);
    auto want_h = oracle::attend_hier(params, hier_set);
    for (std::size_t k = 0; k < got_c.size(); ++k) {
      CHECK(got_c[k] == Approx(want_c[k]).margin(1e-12));
      CHECK(got_h[k] == Approx(want_h[k]).margin(1e-12));
    }
  }
}

TEST_CASE("attention weights are a probability distribution") {
  Corpus c = synth_corpus(25, 14, 3, 8);
  GraphBundle g = make_bundle(c, 3, 6);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 6, 5);
  std::vector<std::uint32_t> seeds = c.universe.of_kind(EntityKind::Api);
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    auto rng = make_rng(trial);
    auto cooc_set = sample_cooc_triples(seeds, g.cooc, 1 + trial % 12, rng);
    Tape t;
    ParamBinder b(t, params);
    auto w = node_vec(t, attend_cooc(t, b, cooc_set).weights);
    double sum = 0.0;
    for (double x : w) {
      CHECK(x >= 0.0);
      sum += x;
    }
    CHECK(sum == Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("hop encoding walks sampled tails (chain trace)") {
  // api -> class -> package chain with single-triple pools at every hop, so
  // each attention output collapses to the hop's tail row.
  Universe u;
  auto api = u.intern(EntityKind::Api, "a").index;
  auto klass = u.intern(EntityKind::Class, "k").index;
  auto pkg = u.intern(EntityKind::Package, "g").index;
  HierarchyGraph hier(u.size(), {{api, Relation::BelongToClass, klass},
                                 {klass, Relation::BelongToPackage, pkg}});
  ModelParams params = ModelParams::init(u.size(), 2, 4, 2);

  auto rng = make_rng(7);
  // set_size 2 keeps the duplicate weights exactly representable (1/2 each)
  auto hops = sample_hier_hops({api}, hier, {1, 2}, rng);
  REQUIRE(hops.size() == 2);
  REQUIRE(!hops[0].empty());
  REQUIRE(!hops[1].empty());
  Tape t;
  ParamBinder b(t, params);
  CHECK(node_vec(t, attend_hier(t, b, hops[0]).output) == entity_row(params, klass));
  CHECK(node_vec(t, attend_hier(t, b, hops[1]).output) == entity_row(params, pkg));
}

TEST_CASE("L=0 yields one hop vector; isolated entities yield zero vectors") {
  Corpus c = corpus_from_sequences({{0, 1}});
  GraphBundle g = make_bundle(c, 1, 2);
  auto rng = make_rng(3);
  CHECK(sample_cooc_hops({api_gid(c, 0)}, g.cooc, {0, 4}, rng).size() == 1);

  // A package has no outgoing hierarchy triples: both hops sample empty.
  auto pkg = c.api_meta[0].package.index;
  auto hops = sample_hier_hops({pkg}, g.hier, {1, 4}, rng);
  REQUIRE(hops.size() == 2);
  CHECK(hops[0].empty());
  CHECK(hops[1].empty());

  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 4, 2);
  SampledEncoding enc;
  enc.local_is_self = true;
  enc.self_gid = pkg;
  enc.hier_hops = hops;
  enc.cooc_hops = sample_cooc_hops({pkg}, g.cooc, {1, 4}, rng);
  Tape t;
  ParamBinder b(t, params);
  auto fused = node_vec(t, encode_entity(t, b, enc, 4, Ablation::None));
  REQUIRE(fused.size() == 4 * 5);  // d * (2L + 3)
  for (std::size_t k = 4; k < fused.size(); ++k) CHECK(fused[k] == 0.0);
}

TEST_CASE("fused length tracks the ablation flag") {
  Corpus c = synth_corpus(10, 8, 2, 6);
  GraphBundle g = make_bundle(c, 2, 3);
  const std::size_t d = 5, L = 1;
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, d, 11);
  auto u = c.methods[0].method.index;
  for (Ablation a : {Ablation::None, Ablation::NoHs, Ablation::NoCo, Ablation::NoHc}) {
    auto rng = make_rng(19);
    auto enc = sample_method_side(u, g, {L, 6}, a, std::nullopt, rng);
    Tape t;
    ParamBinder b(t, params);
    std::size_t expect = d * (2 * L + 3);
    if (!uses_cooc(a)) expect -= d * (L + 1);
    if (!uses_hier(a)) expect -= d * (L + 1);
    CHECK(t.value(encode_entity(t, b, enc, d, a)).size() == expect);
  }
}

TEST_CASE("no-hc score on a shared local view is a squared norm") {
  Corpus c = corpus_from_sequences({{0}});
  GraphBundle g = make_bundle(c);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 6, 13);
  auto rng = make_rng(2);
  double got = score_pair(method_gid(c, 0), api_gid(c, 0), g, params, {1, 4}, Ablation::NoHc,
                          /*exclude_target=*/false, rng);
  auto v = entity_row(params, api_gid(c, 0));
  double expect = 0.0;
  for (double x : v) expect += x * x;
  CHECK(got == Approx(expect).margin(1e-12));
}

TEST_CASE("zero-initialized parameters score zero everywhere") {
  Corpus c = synth_corpus(12, 10, 2, 3);
  GraphBundle g = make_bundle(c, 2, 3);
  ModelParams params = ModelParams::with_shapes(c.universe.size(), g.bucketizer.buckets, 6);
  params.set_dim(6);
  auto rng = make_rng(4);
  for (const auto& rec : c.methods)
    for (const auto& meta : c.api_meta)
      CHECK(score_pair(rec.method.index, meta.api.index, g, params, {1, 4}, Ablation::None,
                       true, rng) == 0.0);
}

TEST_CASE("full score matches the straight-line oracle composition") {
  Corpus c = synth_corpus(18, 12, 3, 5);
  GraphBundle g = make_bundle(c, 3, 4);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 6, 29);
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    auto rng = make_rng(trial, 55);
    const auto& rec = c.methods[trial % c.methods.size()];
    auto api = c.api_meta[trial % c.api_meta.size()].api.index;
    for (Ablation a : {Ablation::None, Ablation::NoHs, Ablation::NoCo, Ablation::NoHc}) {
      ScoreContext ctx = sample_score_context(rec.method.index, api, g, {1, 5}, a, true, rng);
      CHECK(score_sampled(ctx, params, a) == Approx(oracle::score(ctx, params, a)).margin(1e-12));
    }
  }
}

TEST_CASE("scores are invariant under permuting a sampled triple set") {
  Corpus c = synth_corpus(18, 12, 3, 5);
  GraphBundle g = make_bundle(c, 3, 4);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 6, 37);
  auto rng = make_rng(8);
  ScoreContext ctx = sample_score_context(c.methods[0].method.index, c.api_meta[0].api.index,
                                          g, {1, 6}, Ablation::None, true, rng);
  double base = score_sampled(ctx, params, Ablation::None);
  REQUIRE(!ctx.u.cooc_hops.empty());
  auto perm_rng = make_rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    ScoreContext shuffled = ctx;
    for (auto& hop : shuffled.u.cooc_hops) std::shuffle(hop.begin(), hop.end(), perm_rng);
    for (auto& hop : shuffled.i.hier_hops) std::shuffle(hop.begin(), hop.end(), perm_rng);
    CHECK(score_sampled(shuffled, params, Ablation::None) == Approx(base).margin(1e-12));
  }
}

TEST_CASE("fixed seeds make sampled scores reproducible") {
  Corpus c = synth_corpus(18, 12, 3, 5);
  GraphBundle g = make_bundle(c, 3, 4);
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, 6, 41);
  auto run = [&]() {
    auto rng = make_rng(1234);
    return score_pair(c.methods[1].method.index, c.api_meta[1].api.index, g, params, {1, 8},
                      Ablation::None, true, rng);
  };
  CHECK(run() == run());
}

TEST_CASE("end-to-end gradients match finite differences on a small model") {
  Corpus c = synth_corpus(10, 8, 2, 14);
  GraphBundle g = make_bundle(c, 2, 3);
  const std::size_t d = 4;
  ModelParams params = ModelParams::init(c.universe.size(), g.bucketizer.buckets, d, 61);
  auto rng = make_rng(6);
  ScoreContext ctx = sample_score_context(c.methods[0].method.index, c.api_meta[0].api.index,
                                          g, {1, 3}, Ablation::None, true, rng);

  params.zero_grads();
  Tape tape;
  ParamBinder binder(tape, params);
  auto loss = tape.bce_with_logits(score_on_tape(tape, binder, ctx, d, Ablation::None), 1.0);
  tape.backward(loss);
  binder.scatter(params);

  auto loss_fn = [&]() { return mega::example_loss(ctx, params, Ablation::None, 1.0); };
  CHECK(oracle::max_grad_rel_err(params, loss_fn) <= 1e-4);
}
