#include "nvcs/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace nvcs {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (rho < 0.0 || rho >= 1.0) throw ConfigError("rho must be in [0, 1)");
  if (eps <= 0.0) throw ConfigError("eps must be positive");
  if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must be >= 0");
  if (mix_ratio < 0) throw ConfigError("mix_ratio must be >= 0");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
}

OptimizerState OptimizerState::for_params(const Parameters& params, double rho, double eps,
                                          double lr) {
  OptimizerState state;
  state.rho = rho;
  state.eps = eps;
  state.lr = lr;
  for (const auto& [name, t] : params.trainable_tensors()) {
    state.accum_grad_sq.emplace(name, Tensor(t->dims));
    state.accum_update_sq.emplace(name, Tensor(t->dims));
  }
  return state;
}

void adadelta_update(OptimizerState& state, Parameters& params, const Gradients& grads,
                     const FreezeMask& mask) {
  for (auto& [name, tensor] : params.trainable_tensors()) {
    const Tensor* grad = nullptr;
    for (const auto& [gname, gt] : grads.trainable_tensors()) {
      if (gname == name) {
        grad = gt;
        break;
      }
    }
    if (grad == nullptr || !grad->same_shape(*tensor))
      throw ConfigError("gradient missing or misshapen for " + name);
    grad->expect_finite("gradient of " + name);
    if (mask.tensor_fully_frozen(name)) continue;

    Tensor& eg2 = state.accum_grad_sq.at(name);
    Tensor& ed2 = state.accum_update_sq.at(name);
    bool partial = (name == "embed" && !mask.embed_cols.empty()) ||
                   (name == "out_bias" && !mask.bias_entries.empty()) ||
                   (name == "decoder_dense" && !mask.decoder_dense_rows.empty());
    for (std::size_t i = 0; i < tensor->size(); ++i) {
      if (partial && mask.frozen(name, *tensor, i)) continue;
      double g = grad->data[i];
      eg2.data[i] = state.rho * eg2.data[i] + (1.0 - state.rho) * g * g;
      double delta = -(std::sqrt(ed2.data[i] + state.eps) / std::sqrt(eg2.data[i] + state.eps)) * g;
      ed2.data[i] = state.rho * ed2.data[i] + (1.0 - state.rho) * delta * delta;
      tensor->data[i] += state.lr * delta;
    }
  }
}

namespace {

struct TrainingExample {
  const ImageRecord* record;
  std::vector<int> encoded;
};

std::vector<TrainingExample> make_examples(const std::vector<ImageRecord>& corpus,
                                           const Vocabulary& vocab) {
  std::vector<TrainingExample> examples;
  for (const auto& rec : corpus) {
    for (const auto& cap : rec.captions) examples.push_back({&rec, encode(cap, vocab)});
  }
  return examples;
}

Tensor feature_tensor(const ImageRecord& rec) {
  Tensor t = Tensor::vec(static_cast<int>(rec.feature.size()));
  std::copy(rec.feature.begin(), rec.feature.end(), t.data.begin());
  return t;
}

void scale_gradients(Gradients& grads, double factor) {
  for (auto& [name, t] : grads.trainable_tensors()) {
    for (double& v : t->data) v *= factor;
  }
}

void accumulate_gradients(Gradients& acc, const Gradients& g, const FreezeMask& mask) {
  auto src = g.trainable_tensors();
  auto dst = acc.trainable_tensors();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (mask.tensor_fully_frozen(src[i].first)) continue; // stays all-zero
    for (std::size_t k = 0; k < src[i].second->size(); ++k)
      dst[i].second->data[k] += src[i].second->data[k];
  }
}

bool gradients_finite(const Gradients& grads) {
  for (const auto& [name, t] : grads.trainable_tensors()) {
    if (!t->finite()) return false;
  }
  return true;
}

// Global-norm clipping over the coordinates the optimizer will actually move.
void clip_gradients(Gradients& grads, const FreezeMask& mask, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& [name, t] : grads.trainable_tensors()) {
    if (mask.tensor_fully_frozen(name)) continue;
    for (std::size_t i = 0; i < t->size(); ++i) {
      if (mask.frozen(name, *t, i)) continue;
      sq += t->data[i] * t->data[i];
    }
  }
  double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  double factor = max_norm / norm;
  for (auto& [name, t] : grads.trainable_tensors()) {
    for (double& v : t->data) v *= factor;
  }
}

// One pass of shuffled minibatch training over `examples`. Returns false and
// leaves params at the last finite state if the loss or gradients diverge.
bool run_epochs(Parameters& params, OptimizerState& opt,
                const std::vector<TrainingExample>& fixed_examples,
                const std::vector<TrainingExample>& mixin_pool, int mixin_per_epoch,
                const TrainConfig& config, const FreezeMask& mask, const std::string& split,
                Rng& shuffle_rng, std::vector<EpochLog>& curve) {
  auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<const TrainingExample*> order;
    order.reserve(fixed_examples.size());
    for (const auto& ex : fixed_examples) order.push_back(&ex);
    if (mixin_per_epoch > 0 && !mixin_pool.empty()) {
      std::vector<std::size_t> pool_order(mixin_pool.size());
      for (std::size_t i = 0; i < pool_order.size(); ++i) pool_order[i] = i;
      shuffle_rng.shuffle(pool_order);
      for (int i = 0; i < mixin_per_epoch; ++i)
        order.push_back(&mixin_pool[pool_order[i % pool_order.size()]]);
    }
    shuffle_rng.shuffle(order);

    double epoch_nll = 0.0;
    std::size_t epoch_words = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      std::size_t end = std::min(order.size(), begin + config.batch_size);
      Gradients batch = params.zeros_like();
      double batch_nll = 0.0;
      std::size_t batch_words = 0;
      // a numeric failure anywhere in the batch leaves params at the last
      // finite state and reports divergence
      try {
        for (std::size_t i = begin; i < end; ++i) {
          const TrainingExample& ex = *order[i];
          auto [trace, nll] = forward_sequence(params, ex.encoded, feature_tensor(*ex.record));
          Gradients g = backward_sequence(params, trace, &mask);
          accumulate_gradients(batch, g, mask);
          batch_nll += nll;
          batch_words += ex.encoded.size() - 1;
        }
        if (!std::isfinite(batch_nll) || !gradients_finite(batch)) return false;
        scale_gradients(batch, 1.0 / static_cast<double>(batch_words));
        clip_gradients(batch, mask, config.grad_clip_norm);
        adadelta_update(opt, params, batch, mask);
      } catch (const NumericError&) {
        return false;
      }
      epoch_nll += batch_nll;
      epoch_words += batch_words;
    }
    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    curve.push_back({epoch, split, epoch_nll / static_cast<double>(epoch_words), wall});
  }
  return true;
}

TrainResult train_full(const std::vector<ImageRecord>& corpus, const Vocabulary& vocab,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       Rng& rng, const std::string& split) {
  train_config.validate();
  if (corpus.empty()) throw DataError(DataError::Kind::Format, "empty training corpus");

  ModelConfig cfg = model_config;
  cfg.d_image = static_cast<int>(corpus.front().feature.size());
  cfg.vocab_size = vocab.size();

  TrainResult result;
  result.params = init_params(cfg, vocab, rng);
  result.opt = OptimizerState::for_params(result.params, train_config.rho, train_config.eps,
                                          train_config.lr);
  Rng shuffle_rng(train_config.shuffle_seed);
  auto examples = make_examples(corpus, vocab);
  result.diverged = !run_epochs(result.params, result.opt, examples, {}, 0, train_config,
                                FreezeMask::none(), split, shuffle_rng, result.curve);
  return result;
}

}  // namespace

TrainResult train_base(const std::vector<ImageRecord>& corpus, const Vocabulary& vocab,
                       const ModelConfig& model_config, const TrainConfig& train_config,
                       Rng& rng) {
  if (vocab.n_original != vocab.size())
    throw ConfigError("train_base expects a vocabulary without novel words");
  return train_full(corpus, vocab, model_config, train_config, rng, "train");
}

TrainResult train_retrain_baseline(const std::vector<ImageRecord>& combined_corpus,
                                   const Vocabulary& extended_vocab,
                                   const ModelConfig& model_config,
                                   const TrainConfig& train_config, Rng& rng) {
  return train_full(combined_corpus, extended_vocab, model_config, train_config, rng, "retrain");
}

Tensor estimate_xbar(const Parameters& params, const std::vector<ImageRecord>& corpus,
                     const Vocabulary& vocab) {
  if (corpus.empty()) throw DataError(DataError::Kind::Format, "estimate_xbar on empty corpus");
  Tensor sum = Tensor::vec(params.decoder_input_dim());
  std::size_t count = 0;
  for (const auto& rec : corpus) {
    Tensor feature = feature_tensor(rec);
    for (const auto& cap : rec.captions) {
      auto [trace, nll] = forward_sequence(params, encode(cap, vocab), feature);
      for (const auto& acts : trace.steps) {
        const Tensor& x = params.config.tws ? acts.x : acts.m;
        for (std::size_t i = 0; i < sum.size(); ++i) sum.data[i] += x.data[i];
        ++count;
      }
    }
  }
  for (double& v : sum.data) v /= static_cast<double>(count);
  return sum;
}

void centralize(Parameters& params, const Tensor& xbar) {
  if (params.centralized) throw ConfigError("parameters are already centralized");
  if (xbar.dims[0] != params.decoder_input_dim())
    throw ConfigError("xbar dimension mismatch");
  int n = params.config.vocab_size;
  if (params.config.tws) {
    for (int w = 0; w < n; ++w) {
      double acc = 0.0;
      for (int i = 0; i < params.embed.rows(); ++i) acc += params.embed.at(i, w) * xbar.at(i);
      params.out_bias.at(w) += acc;
    }
  } else {
    for (int w = 0; w < n; ++w) {
      double acc = 0.0;
      for (int j = 0; j < params.decoder_dense.cols(); ++j)
        acc += params.decoder_dense.at(w, j) * xbar.at(j);
      params.out_bias.at(w) += acc;
    }
  }
  params.x_mean = xbar;
  params.centralized = true;
}

void decentralize(Parameters& params) {
  if (!params.centralized) throw ConfigError("parameters are not centralized");
  int n = params.config.vocab_size;
  if (params.config.tws) {
    for (int w = 0; w < n; ++w) {
      double acc = 0.0;
      for (int i = 0; i < params.embed.rows(); ++i)
        acc += params.embed.at(i, w) * params.x_mean.at(i);
      params.out_bias.at(w) -= acc;
    }
  } else {
    for (int w = 0; w < n; ++w) {
      double acc = 0.0;
      for (int j = 0; j < params.decoder_dense.cols(); ++j)
        acc += params.decoder_dense.at(w, j) * params.x_mean.at(j);
      params.out_bias.at(w) -= acc;
    }
  }
  params.x_mean.fill(0.0);
  params.centralized = false;
}

Parameters grow_for_new_words(const Parameters& params, const Vocabulary& extended_vocab,
                              ColumnInit init, const SimilarityTable* table, Rng& rng,
                              BiasInit bias_init) {
  if (bias_init == BiasInit::bpf_mean && !params.centralized)
    throw ConfigError("grow_for_new_words requires a centralized model");
  if (extended_vocab.n_original != params.n_original)
    throw ConfigError("vocabulary partition disagrees with the model");
  int n_old = params.config.vocab_size;
  int n_new = extended_vocab.size();
  if (n_new < n_old) throw ConfigError("extended vocabulary is smaller than the model");
  if (init == ColumnInit::similarity && table == nullptr)
    throw ConfigError("similarity initialization needs a similarity table");
  if (n_new == n_old) return params;

  Parameters grown = params;
  grown.config.vocab_size = n_new;

  int e1 = params.config.d_embed1;
  grown.embed = Tensor::matrix(e1, n_new);
  for (int i = 0; i < e1; ++i) {
    for (int w = 0; w < n_old; ++w) grown.embed.at(i, w) = params.embed.at(i, w);
  }

  double mean_bias = 0.0;
  for (int w = 0; w < params.n_original; ++w) mean_bias += params.out_bias.at(w);
  mean_bias /= static_cast<double>(params.n_original);

  grown.out_bias = Tensor::vec(n_new);
  for (int w = 0; w < n_old; ++w) grown.out_bias.at(w) = params.out_bias.at(w);
  for (int w = n_old; w < n_new; ++w)
    grown.out_bias.at(w) = bias_init == BiasInit::bpf_mean ? mean_bias : 0.0;

  if (!params.config.tws) {
    int m = params.config.d_multimodal;
    grown.decoder_dense = Tensor::matrix(n_new, m);
    for (int w = 0; w < n_old; ++w) {
      for (int j = 0; j < m; ++j) grown.decoder_dense.at(w, j) = params.decoder_dense.at(w, j);
    }
  }

  double embed_r = std::sqrt(6.0 / (e1 + n_new));
  for (int w = n_old; w < n_new; ++w) {
    const std::string& word = extended_vocab.tokens[w];
    bool via_similarity = false;
    if (init == ColumnInit::similarity) {
      auto it = table->find(word);
      if (it != table->cend() && !it->second.empty()) {
        // top-10 neighbors by weight, normalized to sum 1
        std::vector<std::pair<std::string, double>> neighbors = it->second;
        std::sort(neighbors.begin(), neighbors.end(), [](const auto& a, const auto& b) {
          if (a.second != b.second) return a.second > b.second;
          return a.first < b.first;
        });
        if (neighbors.size() > 10) neighbors.resize(10);
        double total = 0.0;
        for (const auto& [nb, weight] : neighbors) total += weight;
        if (total > 0.0) {
          for (const auto& [nb, weight] : neighbors) {
            auto nb_it = extended_vocab.index_of.find(nb);
            if (nb_it == extended_vocab.index_of.end() || nb_it->second >= n_old)
              throw ConfigError("similarity neighbor " + nb + " is not an existing word");
            for (int i = 0; i < e1; ++i)
              grown.embed.at(i, w) += (weight / total) * params.embed.at(i, nb_it->second);
          }
          via_similarity = true;
        }
      }
    }
    if (!via_similarity) {
      for (int i = 0; i < e1; ++i) grown.embed.at(i, w) = rng.uniform(-embed_r, embed_r);
    }
    if (!params.config.tws) {
      int m = params.config.d_multimodal;
      double dense_r = std::sqrt(6.0 / (n_new + m));
      for (int j = 0; j < m; ++j) grown.decoder_dense.at(w, j) = rng.uniform(-dense_r, dense_r);
    }
  }
  return grown;
}

TrainResult train_nvcs(const Parameters& params, const std::vector<ImageRecord>& nc_corpus,
                       const std::vector<ImageRecord>* base_corpus, const Vocabulary& vocab,
                       const TrainConfig& train_config, const NvcsOptions& options) {
  train_config.validate();
  if (vocab.size() != params.config.vocab_size)
    throw ConfigError("vocabulary size disagrees with the model");
  if (vocab.size() == vocab.n_original) throw ConfigError("no new words to train");
  if (nc_corpus.empty()) throw DataError(DataError::Kind::Format, "empty novel-concept corpus");

  TrainResult result;
  result.params = params;
  result.opt = OptimizerState::for_params(result.params, train_config.rho, train_config.eps,
                                          train_config.lr);
  FreezeMask mask = FreezeMask::all_except_new_words(result.params, options.bias_trainable);

  auto nc_examples = make_examples(nc_corpus, vocab);
  std::vector<TrainingExample> base_examples;
  int mixin_per_epoch = 0;
  if (train_config.mix_ratio > 0) {
    if (base_corpus == nullptr || base_corpus->empty())
      throw ConfigError("mix_ratio > 0 needs a base corpus");
    base_examples = make_examples(*base_corpus, vocab);
    // image-level ratio applied at the caption-example level
    mixin_per_epoch = static_cast<int>(nc_examples.size()) * train_config.mix_ratio;
  }

  Rng shuffle_rng(train_config.shuffle_seed);
  result.diverged = !run_epochs(result.params, result.opt, nc_examples, base_examples,
                                mixin_per_epoch, train_config, mask, "nvcs", shuffle_rng,
                                result.curve);
  return result;
}

// ---- checkpoints ----

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void write_u16_le(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t read_u16_le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw DataError(DataError::Kind::Truncated, "truncated tensor file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError(DataError::Kind::Truncated, "truncated tensor file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Parameters& params, const Vocabulary& vocab,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  nlohmann::json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["model"] = {
      {"d_embed1", params.config.d_embed1},   {"d_embed2", params.config.d_embed2},
      {"d_hidden", params.config.d_hidden},   {"d_multimodal", params.config.d_multimodal},
      {"d_image", params.config.d_image},     {"vocab_size", params.config.vocab_size},
      {"tws", params.config.tws},             {"decoder_linear", params.config.decoder_linear},
  };
  manifest["vocab"] = vocab.tokens;
  manifest["n_original"] = params.n_original;
  manifest["tws"] = params.config.tws;
  manifest["centralized"] = params.centralized;
  std::ofstream mout(dir / "manifest.json");
  if (!mout) throw DataError(DataError::Kind::MissingFile, "cannot write manifest in " + dir.string());
  mout << manifest.dump(2) << "\n";

  std::ofstream tout(dir / "tensors.bin", std::ios::binary);
  if (!tout) throw DataError(DataError::Kind::MissingFile, "cannot write tensors in " + dir.string());
  tout.write("NVCK", 4);
  write_u32_le(tout, kCheckpointVersion);
  for (const auto& [name, t] : params.all_tensors()) {
    write_u16_le(tout, static_cast<std::uint16_t>(name.size()));
    tout.write(name.data(), static_cast<std::streamsize>(name.size()));
    tout.put(static_cast<char>(t->rank()));
    for (int d : t->dims) write_u32_le(tout, static_cast<std::uint32_t>(d));
    for (double v : t->data) {
      float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      write_u32_le(tout, bits);
    }
  }
  if (!tout) throw DataError(DataError::Kind::Format, "failed writing tensors in " + dir.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json");
  if (!min) throw DataError(DataError::Kind::MissingFile, "missing manifest.json in " + dir.string());
  nlohmann::json manifest;
  try {
    min >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::Format, std::string("bad manifest: ") + e.what());
  }
  if (!manifest.contains("format_version") ||
      manifest["format_version"].get<std::uint32_t>() != kCheckpointVersion)
    throw DataError(DataError::Kind::VersionMismatch, "unsupported checkpoint format version");

  Checkpoint ckpt;
  try {
    const auto& model = manifest.at("model");
    ckpt.params.config.d_embed1 = model.at("d_embed1").get<int>();
    ckpt.params.config.d_embed2 = model.at("d_embed2").get<int>();
    ckpt.params.config.d_hidden = model.at("d_hidden").get<int>();
    ckpt.params.config.d_multimodal = model.at("d_multimodal").get<int>();
    ckpt.params.config.d_image = model.at("d_image").get<int>();
    ckpt.params.config.vocab_size = model.at("vocab_size").get<int>();
    ckpt.params.config.tws = model.at("tws").get<bool>();
    ckpt.params.config.decoder_linear = model.value("decoder_linear", false);
    ckpt.vocab.tokens = manifest.at("vocab").get<std::vector<std::string>>();
    ckpt.params.n_original = manifest.at("n_original").get<int>();
    ckpt.params.centralized = manifest.at("centralized").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataError::Kind::Format, std::string("bad manifest: ") + e.what());
  }
  ckpt.vocab.n_original = ckpt.params.n_original;
  ckpt.vocab.rebuild_index();
  if (ckpt.vocab.size() != ckpt.params.config.vocab_size)
    throw DataError(DataError::Kind::DimMismatch, "manifest vocabulary size disagrees with model");
  if (ckpt.vocab.size() < 3 || ckpt.vocab.tokens[0] != Vocabulary::kStart ||
      ckpt.vocab.tokens[1] != Vocabulary::kEnd || ckpt.vocab.tokens[2] != Vocabulary::kUnk)
    throw DataError(DataError::Kind::Format, "manifest vocabulary missing sentinels");

  // Allocate expected shapes, then fill from the tensor records.
  {
    Rng dummy(0);
    Vocabulary shape_vocab = ckpt.vocab;
    Parameters shaped = init_params(ckpt.params.config, shape_vocab, dummy);
    shaped.n_original = ckpt.params.n_original;
    shaped.centralized = ckpt.params.centralized;
    shaped.config = ckpt.params.config;
    ckpt.params = std::move(shaped);
  }

  std::ifstream tin(dir / "tensors.bin", std::ios::binary);
  if (!tin) throw DataError(DataError::Kind::MissingFile, "missing tensors.bin in " + dir.string());
  char magic[4];
  tin.read(magic, 4);
  if (!tin || std::memcmp(magic, "NVCK", 4) != 0)
    throw DataError(DataError::Kind::BadMagic, "tensors.bin has a bad magic header");
  if (read_u32_le(tin) != kCheckpointVersion)
    throw DataError(DataError::Kind::VersionMismatch, "unsupported tensor file version");

  std::set<std::string> filled;
  while (true) {
    int peek = tin.peek();
    if (peek == std::char_traits<char>::eof()) break;
    std::uint16_t name_len = read_u16_le(tin);
    std::string name(name_len, '\0');
    tin.read(name.data(), name_len);
    if (!tin) throw DataError(DataError::Kind::Truncated, "truncated tensor name");
    int rank = tin.get();
    if (rank == std::char_traits<char>::eof())
      throw DataError(DataError::Kind::Truncated, "truncated tensor header");
    std::vector<int> dims(rank);
    for (int& d : dims) d = static_cast<int>(read_u32_le(tin));
    Tensor* dst = ckpt.params.tensor_by_name(name);
    if (dst == nullptr)
      throw DataError(DataError::Kind::Format, "unknown tensor record " + name);
    if (dst->dims != dims)
      throw DataError(DataError::Kind::DimMismatch, "tensor " + name + " has unexpected dimensions");
    for (double& v : dst->data) {
      std::uint32_t bits = read_u32_le(tin);
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    }
    filled.insert(name);
  }
  for (const auto& [name, t] : ckpt.params.all_tensors()) {
    if (!filled.count(name))
      throw DataError(DataError::Kind::Truncated, "tensor record missing: " + name);
  }
  ckpt.params.expect_finite();
  return ckpt;
}

void write_train_log(const std::filesystem::path& path, const std::vector<EpochLog>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  out << "epoch,split,mean_nll,wall_seconds\n";
  char line[160];
  for (const auto& e : curve) {
    std::snprintf(line, sizeof(line), "%d,%s,%.9f,%.3f\n", e.epoch, e.split.c_str(), e.mean_nll,
                  e.wall_seconds);
    out << line;
  }
}

}  // namespace nvcs
