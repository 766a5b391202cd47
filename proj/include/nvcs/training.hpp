#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nvcs/model.hpp"

namespace nvcs {

struct TrainConfig {
  int batch_size = 16;
  int epochs = 20;
  double lr = 0.01;
  double rho = 0.95;
  double eps = 1e-6;
  double grad_clip_norm = 5.0; // 0 disables clipping
  std::uint64_t shuffle_seed = 0;
  int mix_ratio = 0; // base images per novel-concept image in each epoch
  int min_count = 1; // vocabulary frequency threshold (used by the CLI)

  void validate() const;
};

// AdaDelta accumulators, one pair per trainable tensor.
struct OptimizerState {
  double rho = 0.95;
  double eps = 1e-6;
  double lr = 0.01;
  std::map<std::string, Tensor> accum_grad_sq;
  std::map<std::string, Tensor> accum_update_sq;

  static OptimizerState for_params(const Parameters& params, double rho, double eps, double lr);
};

void adadelta_update(OptimizerState& state, Parameters& params, const Gradients& grads,
                     const FreezeMask& mask);

struct EpochLog {
  int epoch = 0;
  std::string split;
  double mean_nll = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  Parameters params;
  OptimizerState opt;
  std::vector<EpochLog> curve;
  bool diverged = false;
};

// Shuffled minibatch training of the full network (no freezing).
TrainResult train_base(const std::vector<ImageRecord>& corpus, const Vocabulary& vocab,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       Rng& rng);

// Exact mean of the decoder-input activation (the intermediate vector under
// tws, the multimodal vector otherwise) over every timestep of every caption.
Tensor estimate_xbar(const Parameters& params, const std::vector<ImageRecord>& corpus,
                     const Vocabulary& vocab);

// Folds xbar into the output bias so the decoder sees centered inputs;
// output distributions are unchanged. Errors if already centralized.
void centralize(Parameters& params, const Tensor& xbar);
// Inverse transform (used by the no-bpf ablation).
void decentralize(Parameters& params);

enum class ColumnInit { random, similarity };
enum class BiasInit { bpf_mean, zero };

// Weight table for similarity initialization: new word -> (existing word, weight).
using SimilarityTable = std::map<std::string, std::vector<std::pair<std::string, double>>>;

// Appends embedding columns (and decoder rows without tws) plus bias entries
// for the words added by extend_vocab. With BiasInit::bpf_mean every new bias
// entry is the mean of the original entries; similarity columns are the
// normalized weighted sum of the top-10 listed neighbors.
Parameters grow_for_new_words(const Parameters& params, const Vocabulary& extended_vocab,
                              ColumnInit init, const SimilarityTable* table, Rng& rng,
                              BiasInit bias_init = BiasInit::bpf_mean);

struct NvcsOptions {
  bool bias_trainable = false; // ablation: let the new-word bias entries move
};

// Incremental training: only the new-word weights move. With mix_ratio >= 1,
// each epoch adds that many sampled base examples per novel-concept example.
TrainResult train_nvcs(const Parameters& params, const std::vector<ImageRecord>& nc_corpus,
                       const std::vector<ImageRecord>* base_corpus, const Vocabulary& vocab,
                       const TrainConfig& train_config, const NvcsOptions& options = {});

// From-scratch training on the combined corpus with the extended vocabulary.
TrainResult train_retrain_baseline(const std::vector<ImageRecord>& combined_corpus,
                                   const Vocabulary& extended_vocab,
                                   const ModelConfig& model_config,
                                   const TrainConfig& train_config, Rng& rng);

// Checkpoint directory: manifest.json (config, vocabulary, flags) plus
// tensors.bin ("NVCK" magic, u32 version, then named tensor records with f32
// payloads).
void save_checkpoint(const Parameters& params, const Vocabulary& vocab,
                     const std::filesystem::path& dir);

struct Checkpoint {
  Parameters params;
  Vocabulary vocab;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& curve);

}  // namespace nvcs
