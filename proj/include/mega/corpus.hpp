#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mega/common.hpp"
#include "mega/entities.hpp"

namespace mega {

/// One client method and its ordered API call sequence. Duplicates in
/// `calls` are preserved; source order is preserved.
struct MethodRecord {
  EntityId method;
  EntityId project;
  EntityId klass;
  std::vector<EntityId> calls;
};

/// Owning class/package of one API.
struct ApiMeta {
  EntityId api;
  EntityId klass;
  EntityId package;
};

struct Corpus {
  Universe universe;
  std::vector<MethodRecord> methods;
  std::vector<ApiMeta> api_meta;  // one entry per API, in API interning order

  void save(std::ostream& os) const;
  static Corpus load(std::istream& is);
  void save_file(const std::string& path) const;
  static Corpus load_file(const std::string& path);
};

namespace detail {

// Methods are interned under project::class::method so the per-kind name
// bijection holds while method names only need to be unique within
// (project, class).
inline std::string qualified_method_name(std::string_view project, std::string_view klass,
                                         std::string_view method) {
  std::string s;
  s.reserve(project.size() + klass.size() + method.size() + 4);
  s.append(project);
  s.append("::");
  s.append(klass);
  s.append("::");
  s.append(method);
  return s;
}

inline std::optional<std::string> strip_last_dot_segment(std::string_view s) {
  auto pos = s.rfind('.');
  if (pos == std::string_view::npos || pos == 0) return std::nullopt;
  return std::string(s.substr(0, pos));
}

inline nlohmann::json parse_record(const std::string& line, const char* stream_name,
                                   std::size_t line_no) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw DataError(msg(stream_name, " line ", line_no, ": malformed record"));
  return j;
}

inline std::string require_string(const nlohmann::json& j, const char* field,
                                  const char* stream_name, std::size_t line_no) {
  auto it = j.find(field);
  if (it == j.end() || !it->is_string())
    throw DataError(
        msg(stream_name, " line ", line_no, ": missing or non-string field \"", field, "\""));
  return it->get<std::string>();
}

}  // namespace detail

/// Parses the line-delimited interchange format into a Corpus.
///
/// Each methods line: {"project":P,"package":G,"class":C,"method":M,"calls":[...]}.
/// Each apis line:    {"api":A,"class":C,"package":G}.
/// APIs without an explicit apis line get class = qualified name minus its
/// last dot-segment and package = class minus its last dot-segment.
inline Corpus ingest(std::istream& methods_stream, std::istream* api_stream = nullptr) {
  Corpus corpus;
  Universe& u = corpus.universe;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(methods_stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = detail::parse_record(line, "methods", line_no);
    std::string project = detail::require_string(j, "project", "methods", line_no);
    std::string package = detail::require_string(j, "package", "methods", line_no);
    std::string klass = detail::require_string(j, "class", "methods", line_no);
    std::string method = detail::require_string(j, "method", "methods", line_no);
    auto calls_it = j.find("calls");
    if (calls_it == j.end() || !calls_it->is_array())
      throw DataError(msg("methods line ", line_no, ": missing or non-array field \"calls\""));

    MethodRecord rec;
    rec.project = u.intern(EntityKind::Project, project);
    u.intern(EntityKind::Package, package);
    rec.klass = u.intern(EntityKind::Class, klass);
    std::string qualified = detail::qualified_method_name(project, klass, method);
    if (u.find(EntityKind::Method, qualified))
      throw DataError(msg("methods line ", line_no, ": duplicate method \"", qualified, "\""));
    rec.method = u.intern(EntityKind::Method, qualified);
    rec.calls.reserve(calls_it->size());
    for (const auto& c : *calls_it) {
      if (!c.is_string())
        throw DataError(msg("methods line ", line_no, ": non-string entry in \"calls\""));
      rec.calls.push_back(u.intern(EntityKind::Api, c.get<std::string>()));
    }
    corpus.methods.push_back(std::move(rec));
  }
  if (corpus.methods.empty()) throw DataError("empty corpus: no method records");

  // Explicit API metadata, keyed by API index.
  std::unordered_map<std::uint32_t, ApiMeta> explicit_meta;
  if (api_stream != nullptr) {
    line_no = 0;
    while (std::getline(*api_stream, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j = detail::parse_record(line, "apis", line_no);
      std::string api = detail::require_string(j, "api", "apis", line_no);
      std::string klass = detail::require_string(j, "class", "apis", line_no);
      std::string package = detail::require_string(j, "package", "apis", line_no);
      ApiMeta meta;
      meta.api = u.intern(EntityKind::Api, api);
      meta.klass = u.intern(EntityKind::Class, klass);
      meta.package = u.intern(EntityKind::Package, package);
      if (!explicit_meta.emplace(meta.api.index, meta).second)
        throw DataError(msg("apis line ", line_no, ": duplicate meta for \"", api, "\""));
    }
  }

  // Derive missing metadata from qualified names, in API interning order.
  for (std::uint32_t api_index : u.of_kind(EntityKind::Api)) {
    auto it = explicit_meta.find(api_index);
    if (it != explicit_meta.end()) {
      corpus.api_meta.push_back(it->second);
      continue;
    }
    const std::string& name = u.name(api_index);
    auto klass = detail::strip_last_dot_segment(name);
    auto package = klass ? detail::strip_last_dot_segment(*klass) : std::nullopt;
    if (!klass || !package)
      throw DataError(msg("api \"", name,
                          "\" has fewer than 3 dot-segments and no explicit meta record"));
    ApiMeta meta;
    meta.api = {api_index, EntityKind::Api};
    meta.klass = u.intern(EntityKind::Class, *klass);
    meta.package = u.intern(EntityKind::Package, *package);
    corpus.api_meta.push_back(meta);
  }
  return corpus;
}

inline Corpus ingest_files(const std::string& methods_path, const std::string& apis_path = "") {
  std::ifstream methods(methods_path);
  if (!methods) throw DataError(msg("cannot open ", methods_path));
  if (apis_path.empty()) return ingest(methods);
  std::ifstream apis(apis_path);
  if (!apis) throw DataError(msg("cannot open ", apis_path));
  return ingest(methods, &apis);
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

/// Deterministic synthetic corpus with planted co-occurrence structure.
///
/// APIs come in `n_planted_pairs` pairs plus uniform noise APIs. Every call
/// sequence is grown by repeatedly either inserting one planted pair
/// adjacently (probability 0.9, pair chosen uniformly) or appending one
/// uniform noise API. Planted partners share a synthetic class.
inline Corpus synth_corpus(std::size_t n_methods, std::size_t n_apis,
                           std::size_t n_planted_pairs, std::uint64_t seed) {
  if (n_methods < 1) throw DataError("synth_corpus: n_methods must be >= 1");
  if (n_apis < 2 * n_planted_pairs)
    throw DataError("synth_corpus: n_apis must be >= 2 * n_planted_pairs");

  Corpus corpus;
  Universe& u = corpus.universe;
  auto rng = make_rng(seed, fnv1a64("synth"));

  const std::size_t n_projects = std::max<std::size_t>(1, n_methods / 5);
  std::vector<EntityId> projects, method_classes;
  for (std::size_t p = 0; p < n_projects; ++p) {
    projects.push_back(u.intern(EntityKind::Project, msg("proj", p)));
    method_classes.push_back(u.intern(EntityKind::Class, msg("mcls", p)));
  }

  // API-side hierarchy: one class per planted pair, noise classes of ~4 APIs,
  // classes grouped into packages of ~3.
  const std::size_t n_planted = 2 * n_planted_pairs;
  const std::size_t n_noise = n_apis - n_planted;
  std::vector<EntityId> api_classes;
  for (std::size_t k = 0; k < n_planted_pairs; ++k)
    api_classes.push_back(u.intern(EntityKind::Class, msg("pcls", k)));
  const std::size_t n_noise_classes = n_noise == 0 ? 0 : std::max<std::size_t>(1, n_noise / 4);
  for (std::size_t k = 0; k < n_noise_classes; ++k)
    api_classes.push_back(u.intern(EntityKind::Class, msg("ncls", k)));

  const std::size_t n_packages = std::max<std::size_t>(1, api_classes.size() / 3);
  std::vector<EntityId> packages;
  for (std::size_t k = 0; k < n_packages; ++k)
    packages.push_back(u.intern(EntityKind::Package, msg("pkg", k)));

  std::vector<EntityId> apis;
  for (std::size_t a = 0; a < n_apis; ++a)
    apis.push_back(u.intern(EntityKind::Api, msg("api", a)));
  for (std::size_t a = 0; a < n_apis; ++a) {
    std::size_t class_slot =
        a < n_planted ? a / 2 : n_planted_pairs + (a - n_planted) % n_noise_classes;
    ApiMeta meta;
    meta.api = apis[a];
    meta.klass = api_classes[class_slot];
    meta.package = packages[class_slot % n_packages];
    corpus.api_meta.push_back(meta);
  }

  // Ordinary methods stay short (sparse interaction evidence); the last
  // method of each project is long enough to qualify as a test method.
  std::uniform_int_distribution<std::size_t> short_len(3, 6);
  std::uniform_int_distribution<std::size_t> long_len(6, 10);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t m = 0; m < n_methods; ++m) {
    std::size_t p = m % n_projects;
    MethodRecord rec;
    rec.project = projects[p];
    rec.klass = method_classes[p];
    rec.method = u.intern(
        EntityKind::Method,
        detail::qualified_method_name(u.name(projects[p]), u.name(method_classes[p]), msg("m", m)));
    bool last_of_project = m + n_projects >= n_methods;
    std::size_t target_len = last_of_project ? long_len(rng) : short_len(rng);
    while (rec.calls.size() < target_len) {
      if (n_planted_pairs > 0 && coin(rng) < 0.9) {
        std::uniform_int_distribution<std::size_t> pair_dist(0, n_planted_pairs - 1);
        std::size_t k = pair_dist(rng);
        rec.calls.push_back(apis[2 * k]);
        rec.calls.push_back(apis[2 * k + 1]);
      } else if (n_noise > 0) {
        std::uniform_int_distribution<std::size_t> noise_dist(n_planted, n_apis - 1);
        rec.calls.push_back(apis[noise_dist(rng)]);
      } else {
        std::uniform_int_distribution<std::size_t> any_dist(0, n_apis - 1);
        rec.calls.push_back(apis[any_dist(rng)]);
      }
    }
    corpus.methods.push_back(std::move(rec));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Binary cache (magic "MEGC")
// ---------------------------------------------------------------------------

inline void Corpus::save(std::ostream& os) const {
  os.write("MEGC", 4);
  io::write_le<std::uint16_t>(os, 1);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(universe.size()));
  for (std::uint32_t i = 0; i < universe.size(); ++i) {
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(universe.kind(i)));
    io::write_string(os, universe.name(i));
  }
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(methods.size()));
  for (const auto& m : methods) {
    io::write_le<std::uint32_t>(os, m.method.index);
    io::write_le<std::uint32_t>(os, m.project.index);
    io::write_le<std::uint32_t>(os, m.klass.index);
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(m.calls.size()));
    for (const auto& c : m.calls) io::write_le<std::uint32_t>(os, c.index);
  }
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(api_meta.size()));
  for (const auto& a : api_meta) {
    io::write_le<std::uint32_t>(os, a.api.index);
    io::write_le<std::uint32_t>(os, a.klass.index);
    io::write_le<std::uint32_t>(os, a.package.index);
  }
}

inline Corpus Corpus::load(std::istream& is) {
  io::expect_magic(is, "MEGC", "corpus cache");
  auto version = io::read_le<std::uint16_t>(is);
  if (version != 1) throw DataError(msg("unsupported corpus cache version ", version));
  Corpus corpus;
  auto n_entities = io::read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_entities; ++i) {
    auto kind = static_cast<EntityKind>(io::read_le<std::uint8_t>(is));
    if (static_cast<std::uint8_t>(kind) >= kEntityKindCount)
      throw DataError("corpus cache: invalid entity kind");
    std::string name = io::read_string(is);
    EntityId id = corpus.universe.intern(kind, name);
    if (id.index != i) throw DataError("corpus cache: entity table is not densely ordered");
  }
  auto resolve = [&](std::uint32_t index, EntityKind expect) {
    if (index >= corpus.universe.size() || corpus.universe.kind(index) != expect)
      throw DataError(msg("corpus cache: dangling ", kind_name(expect), " id ", index));
    return EntityId{index, expect};
  };
  auto n_methods = io::read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_methods; ++i) {
    MethodRecord rec;
    rec.method = resolve(io::read_le<std::uint32_t>(is), EntityKind::Method);
    rec.project = resolve(io::read_le<std::uint32_t>(is), EntityKind::Project);
    rec.klass = resolve(io::read_le<std::uint32_t>(is), EntityKind::Class);
    auto n_calls = io::read_le<std::uint32_t>(is);
    rec.calls.reserve(n_calls);
    for (std::uint32_t c = 0; c < n_calls; ++c)
      rec.calls.push_back(resolve(io::read_le<std::uint32_t>(is), EntityKind::Api));
    corpus.methods.push_back(std::move(rec));
  }
  auto n_meta = io::read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    ApiMeta meta;
    meta.api = resolve(io::read_le<std::uint32_t>(is), EntityKind::Api);
    meta.klass = resolve(io::read_le<std::uint32_t>(is), EntityKind::Class);
    meta.package = resolve(io::read_le<std::uint32_t>(is), EntityKind::Package);
    corpus.api_meta.push_back(meta);
  }
  return corpus;
}

inline void Corpus::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(msg("cannot write ", path));
  save(os);
}

inline Corpus Corpus::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(msg("cannot open ", path));
  return load(is);
}

}  // namespace mega
