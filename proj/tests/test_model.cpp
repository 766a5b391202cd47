#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <utility>

#include "doctest.h"
#include "nvcs/model.hpp"

using namespace nvcs;

namespace {

Vocabulary tiny_vocab(int n) {
  Vocabulary vocab;
  vocab.tokens = {Vocabulary::kStart, Vocabulary::kEnd, Vocabulary::kUnk};
  for (int i = 3; i < n; ++i) vocab.tokens.push_back("w" + std::to_string(i));
  vocab.n_original = n;
  vocab.rebuild_index();
  return vocab;
}

ModelConfig tiny_config(bool tws = true) {
  ModelConfig config;
  config.d_embed1 = 8;
  config.d_embed2 = 8;
  config.d_hidden = 8;
  config.d_multimodal = 16;
  config.d_image = 8;
  config.vocab_size = 12;
  config.tws = tws;
  return config;
}

Tensor random_feature(int dim, Rng& rng) {
  Tensor t = Tensor::vec(dim);
  for (double& v : t.data) v = rng.uniform(-1, 1);
  return t;
}

void zero_all(Parameters& params) {
  for (auto& [name, t] : params.all_tensors()) t->fill(0.0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace

TEST_CASE("init_params is deterministic, bounded and fan-scaled") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng1(5), rng2(5);
  Parameters a = init_params(tiny_config(), vocab, rng1);
  Parameters b = init_params(tiny_config(), vocab, rng2);
  for (std::size_t i = 0; i < a.all_tensors().size(); ++i) {
    CHECK(a.all_tensors()[i].second->data == b.all_tensors()[i].second->data);
  }

  // r for the 8 x 12 embedding matrix
  double r = std::sqrt(6.0 / (8 + 12));
  CHECK(r == doctest::Approx(0.5477225575051661).epsilon(1e-12));
  double seen_max = 0.0;
  for (double v : a.embed.data) {
    CHECK(std::abs(v) < r);
    seen_max = std::max(seen_max, std::abs(v));
  }
  CHECK(seen_max > 0.25 * r); // actually spread out

  for (double v : a.lstm_b_forget.data) CHECK(v == 1.0);
  for (double v : a.embed2_b.data) CHECK(v == 0.0);
  CHECK(a.centralized == false);
  CHECK(a.n_original == 12);
}

TEST_CASE("embed_lookup extracts a column and matches the dense one-hot product") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(9);
  Parameters params = init_params(tiny_config(), vocab, rng);

  params.embed.at(0, 3) = 0.0;
  Tensor zero_col = Tensor::vec(8);
  for (int i = 0; i < 8; ++i) params.embed.at(i, 5) = 0.0;
  CHECK(embed_lookup(params, 5).data == zero_col.data);

  CHECK_THROWS_AS(embed_lookup(params, 12), ConfigError);
  CHECK_THROWS_AS(embed_lookup(params, -1), ConfigError);

  // dense oracle: f(embed * one_hot(w))
  for (int trial = 0; trial < 1000; ++trial) {
    int w = static_cast<int>(rng.below(12));
    for (int i = 0; i < 8; ++i) params.embed.at(i, w) = rng.uniform(-2, 2);
    Tensor one_hot = Tensor::vec(12);
    one_hot.at(w) = 1.0;
    Tensor dense = scaled_tanh(affine(params.embed, one_hot, Tensor::vec(8)));
    Tensor sparse = embed_lookup(params, w);
    CHECK(max_abs_diff(dense, sparse) == 0.0);
  }
}

TEST_CASE("zero network predicts the uniform distribution") {
  for (bool tws : {true, false}) {
    Vocabulary vocab = tiny_vocab(12);
    Rng rng(2);
    Parameters params = init_params(tiny_config(tws), vocab, rng);
    zero_all(params);
    LstmState state = LstmState::zeros(8);
    Tensor feature = Tensor::vec(8);
    StepResult result = step(params, vocab.start_index, state, feature);
    for (int w = 0; w < 12; ++w) CHECK(result.y.at(w) == doctest::Approx(1.0 / 12).epsilon(1e-14));
  }
}

TEST_CASE("softmax outputs stay a distribution along a sequence") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(23);
  Parameters params = init_params(tiny_config(), vocab, rng);
  Tensor feature = random_feature(8, rng);
  auto [trace, nll] = forward_sequence(params, {0, 3, 4, 5, 1}, feature);
  CHECK(nll >= 0.0);
  for (const auto& acts : trace.steps) {
    double sum = 0.0;
    for (int w = 0; w < 12; ++w) {
      CHECK(acts.y.at(w) > 0.0);
      sum += acts.y.at(w);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("centralized evaluation path reproduces the raw path") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(31);
  Parameters params = init_params(tiny_config(), vocab, rng);
  Tensor feature = random_feature(8, rng);

  // manually build the centered form: bias' = bias + embed^T xbar over all columns
  Parameters centered = params;
  Tensor xbar = Tensor::vec(8);
  for (double& v : xbar.data) v = rng.uniform(-0.5, 0.5);
  for (int w = 0; w < 12; ++w) {
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) acc += params.embed.at(i, w) * xbar.at(i);
    centered.out_bias.at(w) += acc;
  }
  centered.x_mean = xbar;
  centered.centralized = true;

  LstmState state = LstmState::zeros(8);
  for (int w = 0; w < 12; ++w) {
    StepResult raw = step(params, w, state, feature);
    StepResult cen = step(centered, w, state, feature);
    CHECK(max_abs_diff(raw.y, cen.y) < 1e-12);
  }
}

TEST_CASE("tws with an identity intermediate equals the dense decomposition") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(37);
  ModelConfig config = tiny_config();
  config.decoder_linear = true;
  Parameters params = init_params(config, vocab, rng);

  // dense oracle: decoder_dense := embed^T decoder_proj applied to m
  for (int trial = 0; trial < 100; ++trial) {
    Tensor m = Tensor::vec(16);
    for (double& v : m.data) v = rng.uniform(-1.5, 1.5);

    Tensor dense_logits = Tensor::vec(12);
    for (int w = 0; w < 12; ++w) {
      double acc = params.out_bias.at(w);
      for (int j = 0; j < 16; ++j) {
        double um_wj = 0.0;
        for (int i = 0; i < 8; ++i) um_wj += params.embed.at(i, w) * params.decoder_proj.at(i, j);
        acc += um_wj * m.at(j);
      }
      dense_logits.at(w) = acc;
    }

    Tensor x = Tensor::vec(8);
    for (int i = 0; i < 8; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 16; ++j) acc += params.decoder_proj.at(i, j) * m.at(j);
      x.at(i) = acc;
    }
    Tensor shared_logits = params.out_bias;
    for (int i = 0; i < 8; ++i) {
      for (int w = 0; w < 12; ++w) shared_logits.at(w) += params.embed.at(i, w) * x.at(i);
    }
    CHECK(max_abs_diff(dense_logits, shared_logits) < 1e-10);
  }
}

TEST_CASE("forward_sequence on [start,end] with a zero network") {
  Vocabulary vocab = tiny_vocab(5);
  ModelConfig config = tiny_config();
  config.vocab_size = 5;
  Rng rng(3);
  Parameters params = init_params(config, vocab, rng);
  zero_all(params);
  Tensor feature = Tensor::vec(8);
  auto [trace, nll] = forward_sequence(params, {vocab.start_index, vocab.end_index}, feature);
  CHECK(trace.steps.size() == 1);
  CHECK(nll == doctest::Approx(1.6094379124341003).epsilon(1e-12));

  CHECK_THROWS_AS(forward_sequence(params, {vocab.start_index}, feature), ConfigError);
}

TEST_CASE("longer sentences accumulate one term per predicted word") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(41);
  Parameters params = init_params(tiny_config(), vocab, rng);
  Tensor feature = random_feature(8, rng);
  auto [short_trace, short_nll] = forward_sequence(params, {0, 4, 1}, feature);
  auto [long_trace, long_nll] = forward_sequence(params, {0, 4, 4, 4, 1}, feature);
  CHECK(short_trace.steps.size() == 2);
  CHECK(long_trace.steps.size() == 4);
  CHECK(long_nll > short_nll); // more predicted words, all with nonzero surprise
}

TEST_CASE("the image pathway changes the output") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(43);
  Parameters params = init_params(tiny_config(), vocab, rng);
  Tensor feature = random_feature(8, rng);
  Tensor doubled = feature;
  for (double& v : doubled.data) v *= 2.0;
  LstmState state = LstmState::zeros(8);
  StepResult a = step(params, 0, state, feature);
  StepResult b = step(params, 0, state, doubled);
  CHECK(max_abs_diff(a.y, b.y) > 1e-6);
}

TEST_CASE("backward_sequence matches finite differences on a tiny config") {
  for (bool tws : {true, false}) {
    CAPTURE(tws);
    Vocabulary vocab = tiny_vocab(12);
    Rng rng(tws ? 51 : 52);
    Parameters params = init_params(tiny_config(tws), vocab, rng);
    Tensor feature = random_feature(8, rng);
    std::vector<int> sentence = {0, 3, 7, 4, 3, 1};

    auto [trace, nll] = forward_sequence(params, sentence, feature);
    Gradients grads = backward_sequence(params, trace);

    auto loss = [&]() { return forward_sequence(params, sentence, feature).second; };
    auto report = finite_diff_check(loss, params.trainable_tensors(),
                                    std::as_const(grads).trainable_tensors(), 1e-5, 1e-4);
    for (const auto& entry : report.entries) {
      CAPTURE(entry.name);
      CHECK(entry.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("backward_sequence after centralization still matches finite differences") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(53);
  Parameters params = init_params(tiny_config(), vocab, rng);
  for (double& v : params.x_mean.data) v = rng.uniform(-0.3, 0.3);
  params.centralized = true;
  Tensor feature = random_feature(8, rng);
  std::vector<int> sentence = {0, 5, 6, 1};

  auto [trace, nll] = forward_sequence(params, sentence, feature);
  Gradients grads = backward_sequence(params, trace);
  auto loss = [&]() { return forward_sequence(params, sentence, feature).second; };
  auto report = finite_diff_check(loss, params.trainable_tensors(),
                                  std::as_const(grads).trainable_tensors(), 1e-5, 1e-4);
  CHECK(report.all_pass);
}

TEST_CASE("output bias gradient is the softmax-minus-target sum") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(57);
  Parameters params = init_params(tiny_config(), vocab, rng);
  Tensor feature = random_feature(8, rng);
  std::vector<int> sentence = {0, 3, 9, 1};
  auto [trace, nll] = forward_sequence(params, sentence, feature);
  Gradients grads = backward_sequence(params, trace);

  Tensor expected = Tensor::vec(12);
  for (const auto& acts : trace.steps) {
    for (int w = 0; w < 12; ++w) expected.at(w) += acts.y.at(w);
    expected.at(acts.target_index) -= 1.0;
  }
  CHECK(max_abs_diff(expected, grads.out_bias) < 1e-12);
}

TEST_CASE("a [start,end] trace only contributes one step of gradient") {
  Vocabulary vocab = tiny_vocab(12);
  Rng rng(61);
  Parameters params = init_params(tiny_config(), vocab, rng);
  Tensor feature = random_feature(8, rng);
  auto [trace, nll] = forward_sequence(params, {0, 1}, feature);
  CHECK(trace.steps.size() == 1);
  Gradients grads = backward_sequence(params, trace);
  // only the start column of the embedding gets an input-side contribution
  // (decoder-side contributions touch every column)
  CHECK(grads.out_bias.finite());
}

TEST_CASE("a freeze mask only suppresses frozen gradient entries") {
  for (bool tws : {true, false}) {
    CAPTURE(tws);
    Vocabulary vocab = tiny_vocab(12);
    Rng rng(tws ? 71 : 72);
    Parameters params = init_params(tiny_config(tws), vocab, rng);
    params.n_original = 9; // pretend the last three words are novel
    Tensor feature = random_feature(8, rng);
    auto [trace, nll] = forward_sequence(params, {0, 10, 4, 11, 1}, feature);

    Gradients full = backward_sequence(params, trace);
    FreezeMask mask = FreezeMask::all_except_new_words(params);
    Gradients masked = backward_sequence(params, trace, &mask);

    auto full_list = std::as_const(full).trainable_tensors();
    auto masked_list = std::as_const(masked).trainable_tensors();
    for (std::size_t i = 0; i < full_list.size(); ++i) {
      const auto& [name, ft] = full_list[i];
      const Tensor* mt = masked_list[i].second;
      for (std::size_t c = 0; c < ft->size(); ++c) {
        if (mask.frozen(name, *ft, c)) {
          if (name != "out_bias" && !name.starts_with("lstm_b") && name != "embed2_b" &&
              name != "mm_bias") {
            CHECK(mt->data[c] == 0.0); // matrix entries are skipped outright
          }
        } else {
          CHECK(mt->data[c] == ft->data[c]);
        }
      }
    }
  }
}

TEST_CASE("param_stats closed forms") {
  ModelConfig coco;
  coco.d_embed1 = 512;
  coco.d_embed2 = 512;
  coco.d_hidden = 512;
  coco.d_multimodal = 1024;
  coco.d_image = 4096;
  coco.vocab_size = 10000;

  coco.tws = false;
  ParamStats dense = param_stats(coco);
  CHECK(dense.embed_decoder_pair == 15360000);

  coco.tws = true;
  ParamStats shared = param_stats(coco);
  CHECK(shared.embed_decoder_pair == 5644288);
  CHECK(shared.embed_decoder_pair ==
        static_cast<std::int64_t>(512) * 10000 + static_cast<std::int64_t>(512) * 1024);

  // degenerate single-word dictionary still follows the formula
  ModelConfig tiny;
  tiny.d_embed1 = 4;
  tiny.d_embed2 = 4;
  tiny.d_hidden = 4;
  tiny.d_multimodal = 8;
  tiny.d_image = 4;
  tiny.vocab_size = 1;
  tiny.tws = true;
  ParamStats t = param_stats(tiny);
  CHECK(t.embed_decoder_pair == 4 * 1 + 4 * 8);
  tiny.tws = false;
  CHECK(param_stats(tiny).embed_decoder_pair == 4 * 1 + 1 * 8);
  CHECK(t.pair_fraction == doctest::Approx(static_cast<double>(t.embed_decoder_pair) / t.total));
}
