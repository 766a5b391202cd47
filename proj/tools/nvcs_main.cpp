// Command-line driver for the captioning / novel-concept pipeline:
// gen-microworld -> make-splits -> train-base -> extend|retrain -> generate/eval.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nvcs/corpus.hpp"
#include "nvcs/decoding.hpp"
#include "nvcs/evaluation.hpp"
#include "nvcs/kvconfig.hpp"
#include "nvcs/microworld.hpp"
#include "nvcs/model.hpp"
#include "nvcs/tensor.hpp"
#include "nvcs/training.hpp"

namespace fs = std::filesystem;
using namespace nvcs;

namespace {

void print_notices(const KvFile& kv) {
  for (const auto& note : kv.notices()) std::cerr << note << "\n";
}

ModelConfig load_model_config(const std::string& path) {
  ModelConfig defaults;
  if (path.empty()) return defaults;
  KvFile kv = KvFile::parse_file(path);
  kv.require_known_keys({"d_embed1", "d_embed2", "d_hidden", "d_multimodal", "tws"});
  ModelConfig config;
  config.d_embed1 = kv.get_int("d_embed1", defaults.d_embed1);
  config.d_embed2 = kv.get_int("d_embed2", defaults.d_embed2);
  config.d_hidden = kv.get_int("d_hidden", defaults.d_hidden);
  config.d_multimodal = kv.get_int("d_multimodal", defaults.d_multimodal);
  config.tws = kv.get_bool("tws", defaults.tws);
  print_notices(kv);
  return config;
}

TrainConfig load_train_config(const std::string& path) {
  TrainConfig defaults;
  if (path.empty()) return defaults;
  KvFile kv = KvFile::parse_file(path);
  kv.require_known_keys({"batch_size", "epochs", "lr", "rho", "eps", "grad_clip_norm",
                         "shuffle_seed", "mix_ratio", "min_count"});
  TrainConfig config;
  config.batch_size = kv.get_int("batch_size", defaults.batch_size);
  config.epochs = kv.get_int("epochs", defaults.epochs);
  config.lr = kv.get_double("lr", defaults.lr);
  config.rho = kv.get_double("rho", defaults.rho);
  config.eps = kv.get_double("eps", defaults.eps);
  config.grad_clip_norm = kv.get_double("grad_clip_norm", defaults.grad_clip_norm);
  config.shuffle_seed = kv.get_u64("shuffle_seed", defaults.shuffle_seed);
  config.mix_ratio = kv.get_int("mix_ratio", defaults.mix_ratio);
  config.min_count = kv.get_int("min_count", defaults.min_count);
  print_notices(kv);
  config.validate();
  return config;
}

SimilarityTable load_similarity_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::MissingFile, "cannot open similarity table " + path);
  nlohmann::json obj;
  try {
    in >> obj;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::Format, std::string("bad similarity table: ") + e.what());
  }
  SimilarityTable table;
  for (const auto& [word, neighbors] : obj.items()) {
    for (const auto& [neighbor, weight] : neighbors.items())
      table[word].emplace_back(neighbor, weight.get<double>());
  }
  return table;
}

Tensor feature_tensor(const ImageRecord& rec) {
  Tensor t = Tensor::vec(static_cast<int>(rec.feature.size()));
  std::copy(rec.feature.begin(), rec.feature.end(), t.data.begin());
  return t;
}

int cmd_gen_microworld(const std::string& config_path, const std::string& out_dir, int n,
                       std::uint64_t seed) {
  WorldConfig config =
      config_path.empty() ? WorldConfig::defaults() : load_world_config(config_path);
  config.seed = seed;
  config.validate();
  auto records = generate(config, n);

  fs::create_directories(out_dir);
  write_corpus(fs::path(out_dir) / "corpus.jsonl", records);
  write_world_config(fs::path(out_dir) / "world.txt", config);
  fs::create_directories(fs::path(out_dir) / "concepts");
  for (const auto& cls : config.classes) {
    ConceptSpec spec;
    spec.tags = {cls.name};
    spec.words = config.concept_words(cls.name);
    write_concept_file(fs::path(out_dir) / "concepts" / (cls.name + ".txt"), spec);
  }
  std::cerr << "wrote " << records.size() << " images to " << out_dir << "\n";
  return 0;
}

int cmd_make_splits(const std::string& corpus_path, const std::string& concepts_path,
                    const std::string& out_dir) {
  auto corpus = load_corpus(corpus_path);
  ConceptSpec spec = load_concept_file(concepts_path);
  SplitResult split = split_by_concept(corpus, spec.words, spec.tags);

  fs::create_directories(out_dir);
  write_corpus(fs::path(out_dir) / "base.jsonl", split.base_set, "base.features.bin");
  write_corpus(fs::path(out_dir) / "nc.jsonl", split.nc_set, "nc.features.bin");

  nlohmann::json manifest;
  manifest["base_images"] = split.base_set.size();
  manifest["nc_images"] = split.nc_set.size();
  manifest["concept_tags"] = std::vector<std::string>(spec.tags.begin(), spec.tags.end());
  manifest["concept_words"] = std::vector<std::string>(spec.words.begin(), spec.words.end());
  manifest["matched_words"] =
      std::vector<std::string>(split.matched_words.begin(), split.matched_words.end());
  std::ofstream mout(fs::path(out_dir) / "manifest.json");
  mout << manifest.dump(2) << "\n";
  std::cerr << "base " << split.base_set.size() << " / nc " << split.nc_set.size() << "\n";
  return 0;
}

int cmd_train_base(const std::string& corpus_path, const std::string& model_config_path,
                   const std::string& train_config_path, const std::string& out_dir,
                   std::uint64_t seed) {
  auto corpus = load_corpus(corpus_path);
  TrainConfig tc = load_train_config(train_config_path);
  if (!tc.shuffle_seed) tc.shuffle_seed = seed;
  ModelConfig mc = load_model_config(model_config_path);
  Vocabulary vocab = build_vocab(corpus, tc.min_count);

  Rng rng(seed);
  TrainResult result = train_base(corpus, vocab, mc, tc, rng);
  if (result.diverged) {
    save_checkpoint(result.params, vocab, out_dir);
    write_train_log(fs::path(out_dir) / "train_log.csv", result.curve);
    std::cerr << "training diverged; last finite checkpoint written to " << out_dir << "\n";
    return 3;
  }
  Tensor xbar = estimate_xbar(result.params, corpus, vocab);
  centralize(result.params, xbar);
  save_checkpoint(result.params, vocab, out_dir);
  write_train_log(fs::path(out_dir) / "train_log.csv", result.curve);
  write_vocab_file(fs::path(out_dir) / "vocab.txt", vocab);
  std::cerr << "final mean nll " << result.curve.back().mean_nll << "\n";
  return 0;
}

int cmd_extend(const std::string& ckpt_path, const std::string& nc_corpus_path,
               const std::string& mix_base_path, const std::string& init_mode,
               const std::string& sim_table_path, int k, const std::string& ablate,
               const std::string& train_config_path, const std::string& out_dir,
               std::uint64_t seed) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (ablate == "no-tws" && ckpt.params.config.tws)
    throw ConfigError("--ablate no-tws needs a checkpoint trained with tws = false");
  if (ablate != "no-tws" && !ckpt.params.config.tws)
    throw ConfigError("checkpoint was trained with tws = false; pass --ablate no-tws");

  auto nc_corpus = load_corpus(nc_corpus_path);
  Rng rng(seed);
  if (k > 0) {
    if (k > static_cast<int>(nc_corpus.size()))
      throw ConfigError("--k exceeds the novel-concept corpus size");
    std::vector<std::size_t> order(nc_corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(k);
    std::sort(order.begin(), order.end());
    std::vector<ImageRecord> sampled;
    for (std::size_t i : order) sampled.push_back(nc_corpus[i]);
    nc_corpus = std::move(sampled);
  }

  TrainConfig tc = load_train_config(train_config_path);
  if (!tc.shuffle_seed) tc.shuffle_seed = seed;

  auto [vocab2, new_words] = extend_vocab(ckpt.vocab, nc_corpus, tc.min_count);
  if (new_words.empty()) throw ConfigError("the novel-concept corpus adds no new words");
  std::cerr << "new words:";
  for (const auto& w : new_words) std::cerr << " " << w;
  std::cerr << "\n";

  NvcsOptions options;
  BiasInit bias_init = BiasInit::bpf_mean;
  if (ablate == "unfixed-bias") {
    options.bias_trainable = true;
  } else if (ablate == "no-bpf") {
    options.bias_trainable = true;
    bias_init = BiasInit::zero;
    decentralize(ckpt.params);
  } else if (!ablate.empty() && ablate != "no-tws") {
    throw ConfigError("unknown --ablate mode " + ablate);
  }

  ColumnInit column_init = ColumnInit::random;
  SimilarityTable table;
  const SimilarityTable* table_ptr = nullptr;
  if (init_mode == "similarity") {
    column_init = ColumnInit::similarity;
    if (sim_table_path.empty()) throw ConfigError("--init similarity needs --sim-table");
    table = load_similarity_table(sim_table_path);
    table_ptr = &table;
  } else if (init_mode != "random") {
    throw ConfigError("--init must be random or similarity");
  }

  Parameters grown = grow_for_new_words(ckpt.params, vocab2, column_init, table_ptr, rng, bias_init);

  std::vector<ImageRecord> mix_base;
  const std::vector<ImageRecord>* mix_ptr = nullptr;
  if (!mix_base_path.empty()) {
    mix_base = load_corpus(mix_base_path);
    mix_ptr = &mix_base;
    if (tc.mix_ratio == 0) tc.mix_ratio = 1;
  }

  TrainResult result = train_nvcs(grown, nc_corpus, mix_ptr, vocab2, tc, options);
  save_checkpoint(result.params, vocab2, out_dir);
  write_train_log(fs::path(out_dir) / "train_log.csv", result.curve);
  write_vocab_file(fs::path(out_dir) / "vocab.txt", vocab2);
  if (result.diverged) {
    std::cerr << "novel-concept training diverged; last finite checkpoint written\n";
    return 3;
  }
  std::cerr << "final mean nll " << result.curve.back().mean_nll << "\n";
  return 0;
}

int cmd_retrain(const std::string& base_corpus_path, const std::string& nc_corpus_path,
                const std::string& model_config_path, const std::string& train_config_path,
                const std::string& out_dir, std::uint64_t seed) {
  auto base_corpus = load_corpus(base_corpus_path);
  auto nc_corpus = load_corpus(nc_corpus_path);
  TrainConfig tc = load_train_config(train_config_path);
  if (!tc.shuffle_seed) tc.shuffle_seed = seed;
  ModelConfig mc = load_model_config(model_config_path);

  Vocabulary base_vocab = build_vocab(base_corpus, tc.min_count);
  auto [vocab, new_words] = extend_vocab(base_vocab, nc_corpus, tc.min_count);

  std::vector<ImageRecord> combined = base_corpus;
  combined.insert(combined.end(), nc_corpus.begin(), nc_corpus.end());

  Rng rng(seed);
  TrainResult result = train_retrain_baseline(combined, vocab, mc, tc, rng);
  save_checkpoint(result.params, vocab, out_dir);
  write_train_log(fs::path(out_dir) / "train_log.csv", result.curve);
  write_vocab_file(fs::path(out_dir) / "vocab.txt", vocab);
  if (result.diverged) {
    std::cerr << "training diverged; last finite checkpoint written\n";
    return 3;
  }
  std::cerr << "final mean nll " << result.curve.back().mean_nll << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& features_path, int beam,
                 int max_len, const std::string& out_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto corpus = load_corpus(features_path);
  std::ofstream out(out_path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + out_path);
  for (const auto& rec : corpus) {
    auto sequences = generate(ckpt.params, ckpt.vocab, feature_tensor(rec), beam, max_len);
    nlohmann::json obj;
    obj["id"] = rec.id;
    obj["split"] = "all";
    obj["generated"] = sequences.front().text(ckpt.vocab);
    obj["logprob"] = sequences.front().logprob;
    out << obj.dump() << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& nc_test_path,
             const std::string& base_test_path, const std::string& concepts_path, int beam,
             int max_len, const std::string& out_dir, int k_tag, std::uint64_t seed_tag) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  std::vector<ImageRecord> nc_test, base_test;
  if (!nc_test_path.empty()) nc_test = load_corpus(nc_test_path);
  if (!base_test_path.empty()) base_test = load_corpus(base_test_path);
  if (nc_test.empty() && base_test.empty()) throw ConfigError("eval needs at least one test corpus");
  ConceptSpec spec = load_concept_file(concepts_path);

  EvalRun run;
  EvalReport report =
      evaluate(ckpt.params, ckpt.vocab, nc_test, base_test, spec.words, beam, max_len, &run);

  fs::create_directories(out_dir);
  write_generations(fs::path(out_dir) / "generations.jsonl", run);
  write_report_json(fs::path(out_dir) / "report.json", report);
  write_report_csv(fs::path(out_dir) / "report.csv", report, k_tag, seed_tag);
  for (const auto& w : report.new_words) {
    std::fprintf(stderr, "%s p=%.3f r=%.3f f=%.3f\n", w.word.c_str(), w.p, w.r, w.f);
  }
  for (const auto& [name, s] : report.splits) {
    std::fprintf(stderr, "%s: B-1 %.3f B-2 %.3f B-3 %.3f B-4 %.3f (%d images)\n", name.c_str(),
                 s.bleu[0], s.bleu[1], s.bleu[2], s.bleu[3], s.n_images);
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt_path, const std::string& word, int top) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  auto it = ckpt.vocab.index_of.find(word);
  if (it == ckpt.vocab.index_of.end())
    throw DataError(DataError::Kind::Format, "word not in vocabulary: " + word);
  int target = it->second;

  const Tensor& embed = ckpt.params.embed;
  auto column_dot = [&](int a, int b) {
    double acc = 0.0;
    for (int i = 0; i < embed.rows(); ++i) acc += embed.at(i, a) * embed.at(i, b);
    return acc;
  };
  double target_norm = std::sqrt(column_dot(target, target));

  std::vector<std::pair<double, int>> scored;
  for (int w = 3; w < ckpt.vocab.size(); ++w) { // skip the sentinels
    if (w == target) continue;
    double norm = std::sqrt(column_dot(w, w));
    double cos = norm == 0.0 || target_norm == 0.0 ? 0.0 : column_dot(target, w) / (norm * target_norm);
    scored.emplace_back(cos, w);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; i < top && i < static_cast<int>(scored.size()); ++i) {
    std::printf("%s\t%.6f\n", ckpt.vocab.tokens[scored[i].second].c_str(), scored[i].first);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Captioning model with incremental novel-concept learning"};
  app.require_subcommand(1);

  std::string config_path, out_path, corpus_path, concepts_path, model_config_path,
      train_config_path, ckpt_path, nc_corpus_path, mix_base_path, sim_table_path, features_path,
      nc_test_path, base_test_path, word, init_mode = "random", ablate;
  int n = 100, k = 0, beam = 5, max_len = 30, top = 5, k_tag = 0;
  std::uint64_t seed = 0, seed_tag = 0;

  auto* gen = app.add_subcommand("gen-microworld", "Generate a synthetic captioned corpus");
  gen->add_option("--config", config_path, "World config file (key=value)");
  gen->add_option("--out", out_path, "Output directory")->required();
  gen->add_option("--n", n, "Number of images")->required();
  gen->add_option("--seed", seed, "Generation seed")->required();

  auto* splits = app.add_subcommand("make-splits", "Split a corpus by a concept file");
  splits->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  splits->add_option("--concepts", concepts_path, "Concept file")->required();
  splits->add_option("--out", out_path, "Output directory")->required();

  auto* train = app.add_subcommand("train-base", "Train and centralize the base model");
  train->add_option("--corpus", corpus_path, "Training corpus JSONL")->required();
  train->add_option("--model-config", model_config_path, "Model config file");
  train->add_option("--train-config", train_config_path, "Training config file");
  train->add_option("--out", out_path, "Checkpoint directory")->required();
  train->add_option("--seed", seed, "Initialization/shuffle seed")->required();

  auto* extend = app.add_subcommand("extend", "Learn novel concepts incrementally");
  extend->add_option("--ckpt", ckpt_path, "Base checkpoint directory")->required();
  extend->add_option("--nc-corpus", nc_corpus_path, "Novel-concept training corpus")->required();
  extend->add_option("--mix-base", mix_base_path, "Base corpus to interleave 1:1");
  extend->add_option("--init", init_mode, "New-column init: random|similarity");
  extend->add_option("--sim-table", sim_table_path, "Similarity table JSON");
  extend->add_option("--k", k, "Subsample k novel-concept images")->check(CLI::PositiveNumber);
  extend->add_option("--ablate", ablate, "Ablation: no-tws|no-bpf|unfixed-bias");
  extend->add_option("--train-config", train_config_path, "Training config file");
  extend->add_option("--out", out_path, "Output checkpoint directory")->required();
  extend->add_option("--seed", seed, "Sampling/init/shuffle seed")->required();

  auto* retrain = app.add_subcommand("retrain", "Retrain from scratch on base + novel data");
  retrain->add_option("--base-corpus", corpus_path, "Base corpus JSONL")->required();
  retrain->add_option("--nc-corpus", nc_corpus_path, "Novel-concept corpus JSONL")->required();
  retrain->add_option("--model-config", model_config_path, "Model config file");
  retrain->add_option("--train-config", train_config_path, "Training config file");
  retrain->add_option("--out", out_path, "Checkpoint directory")->required();
  retrain->add_option("--seed", seed, "Initialization/shuffle seed")->required();

  auto* generate_cmd = app.add_subcommand("generate", "Decode captions for a corpus");
  generate_cmd->add_option("--ckpt", ckpt_path, "Checkpoint directory")->required();
  generate_cmd->add_option("--features", features_path, "Corpus JSONL with features")->required();
  generate_cmd->add_option("--beam", beam, "Beam width");
  generate_cmd->add_option("--max-len", max_len, "Maximum caption length");
  generate_cmd->add_option("--out", out_path, "Generations JSONL")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on test splits");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint directory")->required();
  eval->add_option("--nc-test", nc_test_path, "Novel-concept test corpus");
  eval->add_option("--base-test", base_test_path, "Base test corpus");
  eval->add_option("--concepts", concepts_path, "Concept file with the new words")->required();
  eval->add_option("--beam", beam, "Beam width");
  eval->add_option("--max-len", max_len, "Maximum caption length");
  eval->add_option("--out", out_path, "Report directory")->required();
  eval->add_option("--tag-k", k_tag, "k column value for report.csv");
  eval->add_option("--tag-seed", seed_tag, "seed column value for report.csv");

  auto* inspect = app.add_subcommand("inspect", "Nearest embedding neighbors of a word");
  inspect->add_option("--ckpt", ckpt_path, "Checkpoint directory")->required();
  inspect->add_option("--word", word, "Query word")->required();
  inspect->add_option("--top", top, "Number of neighbors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_microworld(config_path, out_path, n, seed);
    if (splits->parsed()) return cmd_make_splits(corpus_path, concepts_path, out_path);
    if (train->parsed())
      return cmd_train_base(corpus_path, model_config_path, train_config_path, out_path, seed);
    if (extend->parsed())
      return cmd_extend(ckpt_path, nc_corpus_path, mix_base_path, init_mode, sim_table_path, k,
                        ablate, train_config_path, out_path, seed);
    if (retrain->parsed())
      return cmd_retrain(corpus_path, nc_corpus_path, model_config_path, train_config_path,
                         out_path, seed);
    if (generate_cmd->parsed())
      return cmd_generate(ckpt_path, features_path, beam, max_len, out_path);
    if (eval->parsed())
      return cmd_eval(ckpt_path, nc_test_path, base_test_path, concepts_path, beam, max_len,
                      out_path, k_tag, seed_tag);
    if (inspect->parsed()) return cmd_inspect(ckpt_path, word, top);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
