#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mega/baselines.hpp"
#include "mega/corpus.hpp"
#include "mega/evaluation.hpp"
#include "mega/graphs.hpp"
#include "mega/model.hpp"
#include "mega/training.hpp"

namespace mega::cli {

namespace detail {

namespace fs = std::filesystem;

inline Corpus load_corpus_dir(const std::string& dir) {
  return Corpus::load_file((fs::path(dir) / "corpus.bin").string());
}

inline void write_corpus_dir(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  corpus.save_file((fs::path(dir) / "corpus.bin").string());
}

inline std::vector<std::size_t> parse_ks(const std::string& csv) {
  std::vector<std::size_t> ks;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t comma = csv.find(',', pos);
    std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                                 : comma - pos);
    if (!tok.empty()) {
      char* end = nullptr;
      unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
      if (end == nullptr || *end != '\0' || v == 0)
        throw DataError(msg("invalid K value \"", tok, "\""));
      ks.push_back(static_cast<std::size_t>(v));
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (ks.empty()) throw DataError("no K values given");
  return ks;
}

inline std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= csv.size()) {
    std::size_t comma = csv.find(',', pos);
    std::string tok = csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                                 : comma - pos);
    // trim spaces
    std::size_t b = tok.find_first_not_of(' ');
    std::size_t e = tok.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline void apply_env_seed(std::uint64_t& seed) {
  if (const char* env = std::getenv("MEGA_SEED")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0')
      throw DataError(msg("MEGA_SEED is not an integer: \"", env, "\""));
    seed = static_cast<std::uint64_t>(v);
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError(msg("cannot write ", path));
  os << text;
}

inline LogSink log_sink(const std::string& log_path, std::ofstream& holder) {
  std::ostream* out = &std::cout;
  if (!log_path.empty()) {
    holder.open(log_path);
    if (!holder) throw DataError(msg("cannot write ", log_path));
    out = &holder;
  }
  return [out](const EpochLog& l) {
    nlohmann::json j;
    j["epoch"] = l.epoch;
    j["loss"] = l.loss;
    j["wall_ms"] = l.wall_ms;
    (*out) << j.dump() << "\n";
    out->flush();
  };
}

}  // namespace detail

/// Runs the `mega` command line. Exit codes: 0 success, 2 usage error,
/// 3 data/format error, 4 numeric failure.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"MEGA: multi-view heterogeneous-graph API usage recommender"};
  app.require_subcommand(1);

  // --- ingest -------------------------------------------------------------
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse methods/apis jsonl into a corpus dir");
  std::string in_methods, in_apis, in_out;
  ingest_cmd->add_option("--methods", in_methods, "methods.jsonl path")->required();
  ingest_cmd->add_option("--apis", in_apis, "apis.jsonl path (optional)");
  ingest_cmd->add_option("--out", in_out, "output corpus directory")->required();
  ingest_cmd->callback([&]() {
    Corpus corpus = ingest_files(in_methods, in_apis);
    detail::write_corpus_dir(in_out, corpus);
    std::cout << "corpus: " << corpus.universe.size() << " entities, "
              << corpus.methods.size() << " methods, "
              << corpus.universe.count(EntityKind::Api) << " apis\n";
  });

  // --- synth --------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-pair synthetic corpus");
  std::size_t sy_methods = 50, sy_apis = 30, sy_pairs = 5;
  std::uint64_t sy_seed = 1;
  std::string sy_out;
  synth_cmd->add_option("--methods", sy_methods, "method count");
  synth_cmd->add_option("--apis", sy_apis, "api count");
  synth_cmd->add_option("--pairs", sy_pairs, "planted pair count");
  synth_cmd->add_option("--seed", sy_seed, "rng seed");
  synth_cmd->add_option("--out", sy_out, "output corpus directory")->required();
  synth_cmd->callback([&]() {
    detail::apply_env_seed(sy_seed);
    Corpus corpus = synth_corpus(sy_methods, sy_apis, sy_pairs, sy_seed);
    detail::write_corpus_dir(sy_out, corpus);
    std::cout << "corpus: " << corpus.universe.size() << " entities, "
              << corpus.methods.size() << " methods\n";
  });

  // --- build-graphs ---------------------------------------------------------
  auto* build_cmd =
      app.add_subcommand("build-graphs", "Split the corpus and build the three training graphs");
  std::string bg_corpus, bg_out;
  std::size_t bg_epsilon = 3;
  std::uint32_t bg_buckets = 15;
  build_cmd->add_option("--corpus", bg_corpus, "corpus directory")->required();
  build_cmd->add_option("--epsilon", bg_epsilon, "co-occurrence window");
  build_cmd->add_option("--buckets", bg_buckets, "frequency bucket count");
  build_cmd->add_option("--out", bg_out, "output graphs directory")->required();
  build_cmd->callback([&]() {
    Corpus corpus = detail::load_corpus_dir(bg_corpus);
    SplitResult sr = make_split(corpus);
    GraphBundle g;
    g.interaction = build_interaction(sr.training);
    g.cooc = build_cooccurrence(sr.training, bg_epsilon);
    g.bucketizer = bucketize(g.cooc, bg_buckets);
    g.hier = build_hierarchy(sr.training);
    save_graphs(bg_out, g);
    detail::write_corpus_dir(bg_out, corpus);  // full corpus travels with the graphs
    std::cout << "graphs: " << g.interaction.edge_count() << " interaction edges, "
              << g.cooc.edges().size() << " co-occurrence edges, "
              << g.hier.triples().size() << " hierarchy triples, "
              << sr.split.cases.size() << " test methods\n";
  });

  // --- train ----------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train the graph representation model");
  std::string tr_graphs, tr_out, tr_log, tr_ablate = "none";
  TrainConfig tr_cfg;
  std::size_t tr_threads = 1;
  train_cmd->add_option("--graphs", tr_graphs, "graphs directory")->required();
  train_cmd->add_option("--dim", tr_cfg.dim, "embedding size");
  train_cmd->add_option("--hops", tr_cfg.hops, "max hop count L");
  train_cmd->add_option("--set-size", tr_cfg.set_size, "triple sample size per hop");
  train_cmd->add_option("--lr", tr_cfg.lr, "learning rate");
  train_cmd->add_option("--l2", tr_cfg.l2, "L2 coefficient");
  train_cmd->add_option("--batch", tr_cfg.batch, "batch size");
  train_cmd->add_option("--epochs", tr_cfg.epochs, "epoch count");
  train_cmd->add_option("--neg-ratio", tr_cfg.neg_ratio, "negatives per positive");
  train_cmd->add_option("--seed", tr_cfg.seed, "rng seed");
  train_cmd->add_option("--ablate", tr_ablate, "none|no-hs|no-co|no-hc");
  train_cmd->add_option("--threads", tr_threads, "worker threads (training loop is serial)");
  train_cmd->add_option("--log", tr_log, "training log file (jsonl; default stdout)");
  train_cmd->add_option("--out", tr_out, "checkpoint path")->required();
  train_cmd->callback([&]() {
    detail::apply_env_seed(tr_cfg.seed);
    tr_cfg.ablation = parse_ablation(tr_ablate);
    Corpus corpus = detail::load_corpus_dir(tr_graphs);
    GraphBundle graphs = load_graphs(tr_graphs);
    std::ofstream log_holder;
    TrainResult result = train(corpus, graphs, tr_cfg, detail::log_sink(tr_log, log_holder));
    save_checkpoint(tr_out, result.checkpoint);
    std::cout << "checkpoint written to " << tr_out << " (final loss "
              << result.log.back().loss << ")\n";
  });

  // --- evaluate ---------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("evaluate", "Rank and score the eval split");
  std::string ev_model, ev_graphs, ev_ks = "1,5,10,20", ev_report, ev_csv;
  std::size_t ev_threads = 1, ev_threshold = 3;
  eval_cmd->add_option("--model", ev_model, "checkpoint path")->required();
  eval_cmd->add_option("--graphs", ev_graphs, "graphs directory")->required();
  eval_cmd->add_option("--k", ev_ks, "comma-separated K values");
  eval_cmd->add_option("--freq-threshold", ev_threshold, "low-frequency cutoff");
  eval_cmd->add_option("--threads", ev_threads, "ranking threads");
  eval_cmd->add_option("--report", ev_report, "report JSON path")->required();
  eval_cmd->add_option("--csv", ev_csv, "report CSV path (optional)");
  eval_cmd->callback([&]() {
    Corpus corpus = detail::load_corpus_dir(ev_graphs);
    GraphBundle graphs = load_graphs(ev_graphs);
    Checkpoint ckpt = load_checkpoint(ev_model, corpus.universe.fingerprint());
    auto ks = detail::parse_ks(ev_ks);
    MetricsReport report = evaluate_model(corpus, graphs, ckpt, ks, ev_threshold, ev_threads);
    detail::write_text(ev_report, report_json(report).dump(2) + "\n");
    if (!ev_csv.empty())
      detail::write_text(ev_csv, report_csv(ablation_name(ckpt.config.ablation), report));
    for (auto k : ks)
      std::cout << "SR@" << k << " = " << report.overall.at_k.at(k).sr << "\n";
  });

  // --- ablate ---------------------------------------------------------------
  auto* abl_cmd = app.add_subcommand("ablate", "Train and evaluate all ablation variants");
  std::string ab_graphs, ab_ks = "1,5,10,20", ab_report, ab_csv;
  TrainConfig ab_cfg;
  std::size_t ab_threads = 1, ab_threshold = 3;
  abl_cmd->add_option("--graphs", ab_graphs, "graphs directory")->required();
  abl_cmd->add_option("--dim", ab_cfg.dim, "embedding size");
  abl_cmd->add_option("--hops", ab_cfg.hops, "max hop count L");
  abl_cmd->add_option("--set-size", ab_cfg.set_size, "triple sample size per hop");
  abl_cmd->add_option("--lr", ab_cfg.lr, "learning rate");
  abl_cmd->add_option("--l2", ab_cfg.l2, "L2 coefficient");
  abl_cmd->add_option("--batch", ab_cfg.batch, "batch size");
  abl_cmd->add_option("--epochs", ab_cfg.epochs, "epoch count");
  abl_cmd->add_option("--neg-ratio", ab_cfg.neg_ratio, "negatives per positive");
  abl_cmd->add_option("--seed", ab_cfg.seed, "rng seed");
  abl_cmd->add_option("--k", ab_ks, "comma-separated K values");
  abl_cmd->add_option("--freq-threshold", ab_threshold, "low-frequency cutoff");
  abl_cmd->add_option("--threads", ab_threads, "ranking threads");
  abl_cmd->add_option("--report", ab_report, "combined report JSON path")->required();
  abl_cmd->add_option("--csv", ab_csv, "combined report CSV path (optional)");
  abl_cmd->callback([&]() {
    detail::apply_env_seed(ab_cfg.seed);
    Corpus corpus = detail::load_corpus_dir(ab_graphs);
    GraphBundle graphs = load_graphs(ab_graphs);
    auto ks = detail::parse_ks(ab_ks);
    Ablation variants[] = {Ablation::None, Ablation::NoHs, Ablation::NoCo, Ablation::NoHc};
    auto results = ablate_compare(corpus, graphs, ab_cfg, variants, ks, ab_threshold,
                                  ab_threads);
    nlohmann::json combined;
    std::string csv;
    bool first = true;
    for (const auto& [variant, report] : results) {
      combined["variants"][ablation_name(variant)] = report_json(report);
      csv += report_csv(ablation_name(variant), report, first);
      first = false;
      std::cout << ablation_name(variant) << ": SR@10 = "
                << (report.overall.at_k.count(10) ? report.overall.at_k.at(10).sr : 0.0)
                << "\n";
    }
    detail::write_text(ab_report, combined.dump(2) + "\n");
    if (!ab_csv.empty()) detail::write_text(ab_csv, csv);
  });

  // --- recommend --------------------------------------------------------------
  auto* rec_cmd = app.add_subcommand("recommend", "Rank APIs for an ad-hoc 4-API context");
  std::string rc_model, rc_graphs, rc_context;
  std::size_t rc_k = 10;
  rec_cmd->add_option("--model", rc_model, "checkpoint path")->required();
  rec_cmd->add_option("--graphs", rc_graphs, "graphs directory")->required();
  rec_cmd->add_option("--context", rc_context, "comma-separated API names")->required();
  rec_cmd->add_option("--k", rc_k, "list length");
  rec_cmd->callback([&]() {
    Corpus corpus = detail::load_corpus_dir(rc_graphs);
    GraphBundle graphs = load_graphs(rc_graphs);
    Checkpoint ckpt = load_checkpoint(rc_model, corpus.universe.fingerprint());
    std::vector<std::uint32_t> context;
    for (const std::string& name : detail::split_csv(rc_context)) {
      auto id = corpus.universe.find(EntityKind::Api, name);
      if (!id) throw DataError(msg("unknown API \"", name, "\""));
      context.push_back(id->index);
    }
    if (context.empty()) throw DataError("empty context");

    auto rng = make_rng(ckpt.config.seed, fnv1a64("recommend"));
    SampledEncoding u_enc = sample_method_like(context, std::nullopt, graphs,
                                               ckpt.hop_config(), ckpt.config.ablation, rng);
    std::vector<std::uint32_t> ctx_sorted = context;
    std::sort(ctx_sorted.begin(), ctx_sorted.end());
    RankedList list;
    for (std::uint32_t api : corpus.universe.of_kind(EntityKind::Api)) {
      if (std::binary_search(ctx_sorted.begin(), ctx_sorted.end(), api)) continue;
      auto rng_i = make_rng(ckpt.config.seed, fnv1a64("recommend-i"), api);
      ScoreContext ctx;
      ctx.u = u_enc;
      ctx.i = sample_api_side(api, graphs, ckpt.hop_config(), ckpt.config.ablation, rng_i);
      list.items.push_back({api, score_sampled(ctx, ckpt.params, ckpt.config.ablation)});
    }
    std::sort(list.items.begin(), list.items.end(),
              [](const RankedItem& x, const RankedItem& y) {
                return x.score != y.score ? x.score > y.score : x.api < y.api;
              });
    if (list.items.size() > rc_k) list.items.resize(rc_k);
    std::printf("%-5s %-50s %s\n", "rank", "api", "score");
    for (std::size_t i = 0; i < list.items.size(); ++i)
      std::printf("%-5zu %-50s %.6f\n", i + 1,
                  corpus.universe.name(list.items[i].api).c_str(), list.items[i].score);
  });

  // --- baseline ---------------------------------------------------------------
  auto* base_cmd = app.add_subcommand("baseline", "Evaluate a count-based baseline");
  std::string bl_graphs, bl_kind = "popularity", bl_ks = "1,5,10,20", bl_report, bl_csv;
  std::size_t bl_threshold = 3;
  base_cmd->add_option("--graphs", bl_graphs, "graphs directory")->required();
  base_cmd->add_option("--kind", bl_kind, "popularity|cooccurrence");
  base_cmd->add_option("--k", bl_ks, "comma-separated K values");
  base_cmd->add_option("--freq-threshold", bl_threshold, "low-frequency cutoff");
  base_cmd->add_option("--report", bl_report, "report JSON path")->required();
  base_cmd->add_option("--csv", bl_csv, "report CSV path (optional)");
  base_cmd->callback([&]() {
    Corpus corpus = detail::load_corpus_dir(bl_graphs);
    GraphBundle graphs = load_graphs(bl_graphs);
    BaselineKind kind = parse_baseline(bl_kind);
    auto ks = detail::parse_ks(bl_ks);
    MetricsReport report = evaluate_baseline(kind, corpus, graphs, ks, bl_threshold);
    detail::write_text(bl_report, report_json(report).dump(2) + "\n");
    if (!bl_csv.empty()) detail::write_text(bl_csv, report_csv(bl_kind, report));
    for (auto k : ks)
      std::cout << "SR@" << k << " = " << report.overall.at_k.at(k).sr << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

}  // namespace mega::cli
