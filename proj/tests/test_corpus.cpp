#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "mega/corpus.hpp"

using namespace mega;

namespace {

Corpus ingest_str(const std::string& methods, const std::string& apis = "") {
  std::istringstream ms(methods);
  if (apis.empty()) return ingest(ms);
  std::istringstream as(apis);
  return ingest(ms, &as);
}

std::string corpus_bytes(const Corpus& c) {
  std::ostringstream os(std::ios::binary);
  c.save(os);
  return os.str();
}

}  // namespace

TEST_CASE("ingest interns one line into the expected universe") {
  Corpus c = ingest_str(
      R"json({"project":"P","package":"pkg","class":"C","method":"m","calls":["java.io.File.exists()"]})json");
  CHECK(c.universe.count(EntityKind::Project) == 1);
  CHECK(c.universe.count(EntityKind::Package) == 2);  // "pkg" and derived "java.io"
  CHECK(c.universe.count(EntityKind::Class) == 2);    // "C" and derived "java.io.File"
  CHECK(c.universe.count(EntityKind::Method) == 1);
  CHECK(c.universe.count(EntityKind::Api) == 1);
  REQUIRE(c.methods.size() == 1);
  REQUIRE(c.api_meta.size() == 1);
  CHECK(c.universe.name(c.api_meta[0].klass) == "java.io.File");
  CHECK(c.universe.name(c.api_meta[0].package) == "java.io");
  CHECK(c.universe.find(EntityKind::Package, "pkg").has_value());
}

TEST_CASE("ingest accepts an empty calls list") {
  Corpus c = ingest_str(R"json({"project":"P","package":"g","class":"C","method":"m","calls":[]})json");
  REQUIRE(c.methods.size() == 1);
  CHECK(c.methods[0].calls.empty());
}

TEST_CASE("the same API string interns to the same id in different methods") {
  Corpus c = ingest_str(
      R"json({"project":"P","package":"g","class":"C","method":"m1","calls":["a.b.C.f()"]}
{"project":"P","package":"g","class":"C","method":"m2","calls":["a.b.C.f()"]})json");
  REQUIRE(c.methods.size() == 2);
  CHECK(c.methods[0].calls.at(0) == c.methods[1].calls.at(0));
}

TEST_CASE("malformed line reports the line number") {
  std::string good = R"json({"project":"P","package":"g","class":"C","method":"m","calls":[]})json";
  CHECK_THROWS_WITH(ingest_str(good + "\nnot json"),
                    Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(
      ingest_str(R"json({"project":"P","package":"g","class":"C","calls":[]})json"),
      Catch::Matchers::ContainsSubstring("method"));
}

TEST_CASE("empty corpus is rejected") {
  CHECK_THROWS_AS(ingest_str("\n\n"), DataError);
}

TEST_CASE("short API names without explicit meta are rejected and identified") {
  std::string line =
      R"json({"project":"P","package":"g","class":"C","method":"m","calls":["a.b"]})json";
  CHECK_THROWS_WITH(ingest_str(line), Catch::Matchers::ContainsSubstring("a.b"));
  // Explicit meta makes the same name acceptable.
  Corpus c = ingest_str(line, R"json({"api":"a.b","class":"K","package":"kp"})json");
  REQUIRE(c.api_meta.size() == 1);
  CHECK(c.universe.name(c.api_meta[0].klass) == "K");
}

TEST_CASE("explicit api meta overrides name derivation") {
  Corpus c = ingest_str(
      R"json({"project":"P","package":"g","class":"C","method":"m","calls":["x.y.Z.f()"]})json",
      R"json({"api":"x.y.Z.f()","class":"Other","package":"op"})json");
  CHECK(c.universe.name(c.api_meta[0].klass) == "Other");
}

TEST_CASE("duplicate method within (project, class) is rejected") {
  std::string line = R"json({"project":"P","package":"g","class":"C","method":"m","calls":[]})json";
  CHECK_THROWS_AS(ingest_str(line + "\n" + line), DataError);
}

TEST_CASE("ingest is deterministic on identical bytes") {
  std::string input =
      R"json({"project":"P","package":"g","class":"C","method":"m1","calls":["a.b.C.f()","q.w.E.r()"]}
{"project":"P2","package":"g2","class":"C2","method":"m2","calls":["q.w.E.r()"]})json";
  CHECK(corpus_bytes(ingest_str(input)) == corpus_bytes(ingest_str(input)));
}

TEST_CASE("derived class and package names are prefixes of the API name") {
  Corpus c = ingest_str(
      R"json({"project":"P","package":"g","class":"C","method":"m","calls":["a.b.c.D.f()","x.y.Zed.go()"]})json");
  for (const auto& meta : c.api_meta) {
    const std::string& api = c.universe.name(meta.api);
    CHECK(api.rfind(c.universe.name(meta.klass), 0) == 0);
    CHECK(api.rfind(c.universe.name(meta.package), 0) == 0);
  }
}

TEST_CASE("interning round-trips every entity name") {
  Corpus c = synth_corpus(20, 12, 3, 7);
  for (std::uint32_t i = 0; i < c.universe.size(); ++i) {
    auto found = c.universe.find(c.universe.kind(i), c.universe.name(i));
    REQUIRE(found.has_value());
    CHECK(found->index == i);
  }
}

TEST_CASE("corpus binary cache round-trips losslessly") {
  Corpus c = synth_corpus(15, 10, 2, 3);
  std::string bytes = corpus_bytes(c);
  std::istringstream is(bytes);
  Corpus back = Corpus::load(is);
  CHECK(corpus_bytes(back) == bytes);
  CHECK(back.universe.fingerprint() == c.universe.fingerprint());
}

TEST_CASE("truncated corpus cache fails with an error") {
  Corpus c = synth_corpus(5, 6, 1, 1);
  std::string bytes = corpus_bytes(c);
  std::istringstream is(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(Corpus::load(is), DataError);
}

TEST_CASE("synth_corpus is fully determined by its seed") {
  CHECK(corpus_bytes(synth_corpus(50, 30, 5, 1)) == corpus_bytes(synth_corpus(50, 30, 5, 1)));
  CHECK(corpus_bytes(synth_corpus(50, 30, 5, 1)) != corpus_bytes(synth_corpus(50, 30, 5, 2)));
}

TEST_CASE("synth_corpus validates its parameters") {
  CHECK_THROWS_AS(synth_corpus(0, 10, 1, 1), DataError);
  CHECK_THROWS_AS(synth_corpus(5, 3, 2, 1), DataError);
}

TEST_CASE("planted pair co-occurs adjacently in most methods that mention it") {
  Corpus c = synth_corpus(200, 8, 1, 11);
  auto a = c.universe.find(EntityKind::Api, "api0");
  auto b = c.universe.find(EntityKind::Api, "api1");
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  std::size_t mentioning = 0, adjacent = 0;
  for (const auto& m : c.methods) {
    bool mentions = false, adj = false;
    for (std::size_t p = 0; p < m.calls.size(); ++p) {
      if (m.calls[p] == *a || m.calls[p] == *b) mentions = true;
      if (p + 1 < m.calls.size()) {
        bool ab = m.calls[p] == *a && m.calls[p + 1] == *b;
        bool ba = m.calls[p] == *b && m.calls[p + 1] == *a;
        if (ab || ba) adj = true;
      }
    }
    mentioning += mentions;
    adjacent += adj;
  }
  REQUIRE(mentioning > 0);
  CHECK(static_cast<double>(adjacent) / mentioning >= 0.8);
}

TEST_CASE("one-method two-api synth contains both planted APIs") {
  Corpus c = synth_corpus(1, 2, 1, 5);
  REQUIRE(c.methods.size() == 1);
  bool has0 = false, has1 = false;
  for (const auto& call : c.methods[0].calls) {
    if (c.universe.name(call) == "api0") has0 = true;
    if (c.universe.name(call) == "api1") has1 = true;
  }
  CHECK(has0);
  CHECK(has1);
}
