#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mega/adam.hpp"
#include "mega/common.hpp"
#include "mega/corpus.hpp"
#include "mega/graphs.hpp"
#include "mega/model.hpp"

namespace mega {

// ---------------------------------------------------------------------------
// Train/test split (last method per project, 4-API visible context)
// ---------------------------------------------------------------------------

struct EvalCase {
  std::uint32_t method = 0;
  std::array<std::uint32_t, 4> context{};       // first four calls, in order
  std::vector<std::uint32_t> ground_truth;      // deduplicated, context excluded
};

struct EvalSplit {
  std::vector<EvalCase> cases;

  const EvalCase* find(std::uint32_t method) const {
    for (const auto& c : cases)
      if (c.method == method) return &c;
    return nullptr;
  }
};

struct SplitResult {
  EvalSplit split;
  Corpus training;  // test methods keep only their 4 context calls
};

/// The last method of each project becomes its test method when it has at
/// least 5 calls and a non-empty deduplicated remainder; its first four calls
/// stay in the training data as visible context.
inline SplitResult make_split(const Corpus& corpus) {
  std::unordered_map<std::uint32_t, std::size_t> last_of_project;
  for (std::size_t m = 0; m < corpus.methods.size(); ++m)
    last_of_project[corpus.methods[m].project.index] = m;

  SplitResult out;
  out.training = corpus;
  for (std::size_t m = 0; m < corpus.methods.size(); ++m) {
    const MethodRecord& rec = corpus.methods[m];
    if (last_of_project.at(rec.project.index) != m) continue;
    if (rec.calls.size() < 5) continue;
    EvalCase c;
    c.method = rec.method.index;
    std::unordered_set<std::uint32_t> context_set;
    for (std::size_t k = 0; k < 4; ++k) {
      c.context[k] = rec.calls[k].index;
      context_set.insert(c.context[k]);
    }
    std::unordered_set<std::uint32_t> seen;
    for (std::size_t k = 4; k < rec.calls.size(); ++k) {
      std::uint32_t a = rec.calls[k].index;
      if (context_set.count(a) || !seen.insert(a).second) continue;
      c.ground_truth.push_back(a);
    }
    if (c.ground_truth.empty()) continue;
    std::sort(c.ground_truth.begin(), c.ground_truth.end());
    out.training.methods[m].calls.resize(4);
    out.split.cases.push_back(std::move(c));
  }
  if (out.split.cases.empty())
    throw DataError("make_split: no project has a qualifying test method");
  return out;
}

// ---------------------------------------------------------------------------
// Training examples
// ---------------------------------------------------------------------------

struct TrainExample {
  std::uint32_t method = 0;
  std::uint32_t api = 0;
  std::uint8_t label = 0;
};

/// Positive examples are the training interaction edges; each yields
/// `neg_ratio` uniform negatives over APIs the method does not call. APIs in
/// `forbidden` (a test method's ground truth) are never sampled as negatives.
inline std::vector<TrainExample> make_examples(
    const Corpus& training, const CallInteractionGraph& interaction, std::size_t neg_ratio,
    std::mt19937_64& rng,
    const std::unordered_map<std::uint32_t, std::vector<std::uint32_t>>& forbidden = {}) {
  if (neg_ratio < 1) throw DataError("make_examples: neg_ratio must be >= 1");
  const auto& apis = training.universe.of_kind(EntityKind::Api);
  std::vector<TrainExample> out;
  std::uniform_int_distribution<std::size_t> pick_api(0, apis.empty() ? 0 : apis.size() - 1);
  for (const auto& rec : training.methods) {
    std::uint32_t u = rec.method.index;
    const auto& called = interaction.neighbors(u);
    if (called.empty()) continue;
    const std::vector<std::uint32_t>* banned = nullptr;
    if (auto it = forbidden.find(u); it != forbidden.end()) banned = &it->second;
    std::size_t excluded = called.size() + (banned ? banned->size() : 0);
    for (std::uint32_t a : called) {
      out.push_back({u, a, 1});
      if (excluded >= apis.size()) {
        std::cerr << "warning: method " << training.universe.name(u)
                  << " has no negative candidates; skipped\n";
        continue;
      }
      for (std::size_t n = 0; n < neg_ratio; ++n) {
        for (;;) {
          std::uint32_t candidate = apis[pick_api(rng)];
          if (std::binary_search(called.begin(), called.end(), candidate)) continue;
          if (banned &&
              std::binary_search(banned->begin(), banned->end(), candidate))
            continue;
          out.push_back({u, candidate, 0});
          break;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints (magic "MEGM")
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t dim = 64;
  std::size_t hops = 1;
  std::size_t set_size = 16;
  double lr = 0.002;
  double l2 = 1e-5;
  std::size_t batch = 1024;
  std::size_t epochs = 40;
  std::size_t neg_ratio = 1;
  std::uint64_t seed = 42;
  Ablation ablation = Ablation::None;
};

struct Checkpoint {
  TrainConfig config;
  std::uint64_t vocab_hash = 0;
  std::size_t buckets = 1;
  std::size_t epochs_trained = 0;
  ModelParams params;

  HopConfig hop_config() const { return {config.hops, config.set_size}; }
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

inline std::uint64_t parse_hex64(const std::string& s) {
  return std::strtoull(s.c_str(), nullptr, 16);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["format"] = "MEGM/1";
  manifest["dim"] = ckpt.config.dim;
  manifest["hops"] = ckpt.config.hops;
  manifest["set_size"] = ckpt.config.set_size;
  manifest["lr"] = ckpt.config.lr;
  manifest["l2"] = ckpt.config.l2;
  manifest["batch"] = ckpt.config.batch;
  manifest["epochs"] = ckpt.config.epochs;
  manifest["neg_ratio"] = ckpt.config.neg_ratio;
  manifest["seed"] = ckpt.config.seed;
  manifest["ablation"] = ablation_name(ckpt.config.ablation);
  manifest["buckets"] = ckpt.buckets;
  manifest["epochs_trained"] = ckpt.epochs_trained;
  manifest["vocab_hash"] = detail::hex64(ckpt.vocab_hash);
  manifest["entities"] = ckpt.params.entity_count();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& slot : ckpt.params.slots()) {
    nlohmann::json t;
    t["name"] = slot.name;
    t["shape"] = slot.value.shape;
    tensors.push_back(t);
  }
  manifest["tensors"] = tensors;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(msg("cannot write ", path));
  os.write("MEGM", 4);
  std::string text = manifest.dump();
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& slot : ckpt.params.slots())
    for (double v : slot.value.data) io::write_f32(os, static_cast<float>(v));
}

/// Loads a checkpoint; when `expect_vocab_hash` is given, a mismatch against
/// the manifest is an error (model trained over a different universe).
inline Checkpoint load_checkpoint(const std::string& path,
                                  std::optional<std::uint64_t> expect_vocab_hash = {}) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(msg("cannot open ", path));
  io::expect_magic(is, "MEGM", "checkpoint");
  auto len = io::read_le<std::uint32_t>(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw DataError("checkpoint: truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(text, nullptr, false);
  if (manifest.is_discarded()) throw DataError("checkpoint: malformed manifest JSON");
  if (manifest.value("format", "") != std::string("MEGM/1"))
    throw DataError("checkpoint: unsupported format");

  Checkpoint ckpt;
  ckpt.config.dim = manifest.at("dim").get<std::size_t>();
  ckpt.config.hops = manifest.at("hops").get<std::size_t>();
  ckpt.config.set_size = manifest.at("set_size").get<std::size_t>();
  ckpt.config.lr = manifest.at("lr").get<double>();
  ckpt.config.l2 = manifest.at("l2").get<double>();
  ckpt.config.batch = manifest.at("batch").get<std::size_t>();
  ckpt.config.epochs = manifest.at("epochs").get<std::size_t>();
  ckpt.config.neg_ratio = manifest.at("neg_ratio").get<std::size_t>();
  ckpt.config.seed = manifest.at("seed").get<std::uint64_t>();
  ckpt.config.ablation = parse_ablation(manifest.at("ablation").get<std::string>());
  ckpt.buckets = manifest.at("buckets").get<std::size_t>();
  ckpt.epochs_trained = manifest.at("epochs_trained").get<std::size_t>();
  ckpt.vocab_hash = detail::parse_hex64(manifest.at("vocab_hash").get<std::string>());
  if (expect_vocab_hash && *expect_vocab_hash != ckpt.vocab_hash)
    throw DataError(
        "checkpoint: vocabulary hash mismatch (model was trained on a different corpus)");

  std::size_t entities = manifest.at("entities").get<std::size_t>();
  ckpt.params = ModelParams::with_shapes(entities, ckpt.buckets, ckpt.config.dim);
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != ckpt.params.slots().size())
    throw DataError("checkpoint: tensor list does not match the expected layout");
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& slot = ckpt.params.slots()[k];
    if (tensors[k].at("name").get<std::string>() != slot.name ||
        tensors[k].at("shape").get<std::vector<std::size_t>>() != slot.value.shape)
      throw DataError(msg("checkpoint: tensor ", slot.name, " has unexpected name or shape"));
  }
  for (auto& slot : ckpt.params.slots())
    for (auto& v : slot.value.data) v = static_cast<double>(io::read_f32(is));
  return ckpt;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

using LogSink = std::function<void(const EpochLog&)>;

/// Forward-only loss of one sampled example; exposed for tests.
inline double example_loss(const ScoreContext& ctx, const ModelParams& params,
                           Ablation ablation, double label) {
  Tape tape;
  ParamBinder binder(tape, params);
  auto s = score_on_tape(tape, binder, ctx, params.dim(), ablation);
  return tape.value(tape.bce_with_logits(s, label)).data[0];
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

/// Trains on graphs built from the training view of `corpus`, minimizing mean
/// BCE of sigmoid(score) with Adam. The target API is excluded from the
/// method's seed sets while scoring (leave-one-out); test-method ground truth
/// never appears as a positive or a negative.
inline TrainResult train(const Corpus& corpus, const GraphBundle& graphs,
                         const TrainConfig& cfg, LogSink sink = nullptr) {
  SplitResult sr = make_split(corpus);
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> forbidden;
  for (const auto& c : sr.split.cases) forbidden.emplace(c.method, c.ground_truth);

  ModelParams params = ModelParams::init(corpus.universe.size(), graphs.bucketizer.buckets,
                                         cfg.dim, cfg.seed);
  AdamOptimizer adam(AdamConfig{.lr = cfg.lr, .weight_decay = cfg.l2});
  HopConfig hop_cfg{cfg.hops, cfg.set_size};
  auto param_values = params.values();
  auto param_grads = params.grads();

  TrainResult result;
  Tape tape;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto example_rng = make_rng(cfg.seed, fnv1a64("examples"), epoch);
    auto examples =
        make_examples(sr.training, graphs.interaction, cfg.neg_ratio, example_rng, forbidden);
    auto shuffle_rng = make_rng(cfg.seed, fnv1a64("shuffle"), epoch);
    std::shuffle(examples.begin(), examples.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch, ++batch_index) {
      std::size_t end = std::min(examples.size(), start + cfg.batch);
      double batch_scale = 1.0 / static_cast<double>(end - start);
      params.zero_grads();
      try {
        for (std::size_t k = start; k < end; ++k) {
          const TrainExample& ex = examples[k];
          auto sample_rng = make_rng(cfg.seed, fnv1a64("sample"), epoch, k);
          ScoreContext ctx = sample_score_context(ex.method, ex.api, graphs, hop_cfg,
                                                  cfg.ablation, /*exclude_target=*/true,
                                                  sample_rng);
          tape.reset();
          ParamBinder binder(tape, params);
          auto s = score_on_tape(tape, binder, ctx, cfg.dim, cfg.ablation);
          auto loss = tape.bce_with_logits(s, static_cast<double>(ex.label));
          loss_sum += tape.value(loss).data[0];
          tape.backward(loss, batch_scale);
          binder.scatter(params);
        }
      } catch (const NumericError& e) {
        throw NumericError(msg("training diverged at epoch ", epoch, " batch ", batch_index,
                               ": ", e.what()));
      }
      adam.step(param_values, param_grads);
    }

    auto t1 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(examples.size());
    log.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (sink) sink(log);
    result.log.push_back(log);
  }

  result.checkpoint.config = cfg;
  result.checkpoint.vocab_hash = corpus.universe.fingerprint();
  result.checkpoint.buckets = graphs.bucketizer.buckets;
  result.checkpoint.epochs_trained = cfg.epochs;
  result.checkpoint.params = std::move(params);
  return result;
}

}  // namespace mega
