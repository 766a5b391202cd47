#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nvcs/corpus.hpp"
#include "nvcs/tensor.hpp"

namespace nvcs {

struct ModelConfig {
  int d_embed1 = 512;      // first word-embedding dimension
  int d_embed2 = 512;      // second word-embedding dimension
  int d_hidden = 512;      // LSTM hidden dimension
  int d_multimodal = 1024; // fusion layer dimension
  int d_image = 0;         // image feature dimension (from the corpus)
  int vocab_size = 0;
  bool tws = true;          // share the embedding matrix with the decoder
  bool decoder_linear = false; // drop the nonlinearity on the decoder intermediate

  void validate() const;
};

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(int d_hidden);
};

// All trainable tensors of the network plus the decoder-centering state.
// The embedding matrix columns [0, n_original) belong to the original words;
// columns from n_original on are novel-concept words added by growth.
struct Parameters {
  ModelConfig config;
  int n_original = 0;
  bool centralized = false;

  Tensor embed;         // d_embed1 x N, column per word; doubles as the decoder projection under tws
  Tensor embed2_w;      // d_embed2 x d_embed1
  Tensor embed2_b;      // d_embed2
  Tensor lstm_w_input, lstm_b_input;   // each gate: d_hidden x (d_embed2 + d_hidden), bias d_hidden
  Tensor lstm_w_forget, lstm_b_forget;
  Tensor lstm_w_output, lstm_b_output;
  Tensor lstm_w_cell, lstm_b_cell;
  Tensor mm_word;       // d_multimodal x d_embed2
  Tensor mm_hidden;     // d_multimodal x d_hidden
  Tensor mm_image;      // d_multimodal x d_image
  Tensor mm_bias;       // d_multimodal
  Tensor decoder_proj;  // tws only: d_embed1 x d_multimodal
  Tensor decoder_dense; // non-tws only: N x d_multimodal
  Tensor out_bias;      // N; holds b before centralization, b' after
  Tensor x_mean;        // decoder-input mean; zeros until centralization

  // d_embed1 under tws, d_multimodal otherwise.
  int decoder_input_dim() const;

  // Trainable tensors in a fixed order (excludes x_mean).
  std::vector<std::pair<std::string, Tensor*>> trainable_tensors();
  std::vector<std::pair<std::string, const Tensor*>> trainable_tensors() const;
  // Trainable tensors plus x_mean; the persisted set.
  std::vector<std::pair<std::string, Tensor*>> all_tensors();
  std::vector<std::pair<std::string, const Tensor*>> all_tensors() const;
  Tensor* tensor_by_name(const std::string& name);

  Parameters zeros_like() const;
  void expect_finite() const;
};

using Gradients = Parameters;

// True entries are frozen: the optimizer leaves them (and their accumulator
// slots) untouched, and the backward pass may skip accumulating their
// gradients.
struct FreezeMask {
  std::set<std::string> tensors;                // wholly frozen tensors
  std::vector<std::uint8_t> embed_cols;         // per-column; empty = none
  std::vector<std::uint8_t> bias_entries;       // per-entry; empty = none
  std::vector<std::uint8_t> decoder_dense_rows; // per-row; empty = none

  bool frozen(const std::string& name, const Tensor& t, std::size_t flat) const;
  bool tensor_fully_frozen(const std::string& name) const { return tensors.count(name) > 0; }

  static FreezeMask none() { return {}; }
  // Everything frozen except the novel-word embedding columns (and, without
  // tws, the novel-word decoder rows). bias_trainable opens the novel-word
  // bias entries.
  static FreezeMask all_except_new_words(const Parameters& params, bool bias_trainable = false);
};

struct StepActivations {
  int input_index = -1;
  int target_index = -1; // filled by forward_sequence
  Tensor e1, e2;
  Tensor gate_i, gate_f, gate_o, gate_c;
  Tensor cell, cell_tanh, hidden;
  Tensor m;
  Tensor x; // decoder intermediate (tws only)
  Tensor y;
};

struct ForwardTrace {
  Tensor image_feature;
  std::vector<int> indices; // the encoded sentence, [start ... end]
  std::vector<StepActivations> steps;
};

struct StepResult {
  Tensor y;
  LstmState state;
  StepActivations acts;
};

struct ParamStats {
  std::int64_t total = 0;
  std::int64_t embed_decoder_pair = 0; // embedding matrix + decoder matrix
  double pair_fraction = 0.0;
};

// Uniform(-r, r) with r = sqrt(6 / (rows + cols)) per matrix; biases zero
// except the LSTM forget-gate bias at 1.0.
Parameters init_params(const ModelConfig& config, const Vocabulary& vocab, Rng& rng);

// f(column `index` of the embedding matrix), computed by column extraction.
Tensor embed_lookup(const Parameters& params, int index);

// One decoder step: embeddings -> LSTM -> multimodal fusion -> softmax over
// the next word.
StepResult step(const Parameters& params, int prev_index, const LstmState& state,
                const Tensor& image_feature);

// Runs the whole encoded sentence; returns the trace and the sentence
// negative log-likelihood (sum over predicted words).
std::pair<ForwardTrace, double> forward_sequence(const Parameters& params,
                                                 const std::vector<int>& indices,
                                                 const Tensor& image_feature);

// Backpropagation through time over a trace; exact NLL gradients for every
// trainable tensor. The embedding matrix accumulates both its input-side and
// decoder-side contributions. With a freeze mask, gradient accumulation is
// skipped for frozen tensors and columns (their entries stay zero); unfrozen
// gradients are identical either way.
Gradients backward_sequence(const Parameters& params, const ForwardTrace& trace,
                            const FreezeMask* frozen = nullptr);

ParamStats param_stats(const ModelConfig& config);

}  // namespace nvcs
