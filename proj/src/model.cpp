#include "nvcs/model.hpp"

#include <cmath>

namespace nvcs {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor concat(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::vec(a.dims[0] + b.dims[0]);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.dims[0]);
  return out;
}

// out += w^T * v, for w of shape rows x cols and v of length rows.
void add_matvec_transposed(const Tensor& w, const Tensor& v, Tensor& out) {
  for (int i = 0; i < w.rows(); ++i) {
    const double* row = &w.data[static_cast<std::size_t>(i) * w.cols()];
    double vi = v.at(i);
    for (int j = 0; j < w.cols(); ++j) out.at(j) += row[j] * vi;
  }
}

// grad += dout (x) vin
void add_outer(const Tensor& dout, const Tensor& vin, Tensor& grad) {
  for (int i = 0; i < dout.dims[0]; ++i) {
    double di = dout.at(i);
    if (di == 0.0) continue;
    double* row = &grad.data[static_cast<std::size_t>(i) * grad.cols()];
    for (int j = 0; j < vin.dims[0]; ++j) row[j] += di * vin.at(j);
  }
}

void add_vec(const Tensor& src, Tensor& dst) {
  for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
}

Tensor gate(const Tensor& w, const Tensor& b, const Tensor& z, bool is_cell) {
  Tensor a = affine(w, z, b);
  for (double& v : a.data) v = is_cell ? std::tanh(v) : sigmoid(v);
  return a;
}

double fan_radius(int rows, int cols) { return std::sqrt(6.0 / (rows + cols)); }

Tensor uniform_matrix(int rows, int cols, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  double r = fan_radius(rows, cols);
  for (double& v : t.data) v = rng.uniform(-r, r);
  return t;
}

}  // namespace

void ModelConfig::validate() const {
  if (d_embed1 < 1 || d_embed2 < 1 || d_hidden < 1 || d_multimodal < 1 || d_image < 1 ||
      vocab_size < 1)
    throw ConfigError("model dimensions must all be >= 1");
}

LstmState LstmState::zeros(int d_hidden) {
  LstmState s;
  s.h = Tensor::vec(d_hidden);
  s.c = Tensor::vec(d_hidden);
  return s;
}

int Parameters::decoder_input_dim() const {
  return config.tws ? config.d_embed1 : config.d_multimodal;
}

std::vector<std::pair<std::string, Tensor*>> Parameters::trainable_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"embed", &embed},
      {"embed2_w", &embed2_w},
      {"embed2_b", &embed2_b},
      {"lstm_w_input", &lstm_w_input},
      {"lstm_b_input", &lstm_b_input},
      {"lstm_w_forget", &lstm_w_forget},
      {"lstm_b_forget", &lstm_b_forget},
      {"lstm_w_output", &lstm_w_output},
      {"lstm_b_output", &lstm_b_output},
      {"lstm_w_cell", &lstm_w_cell},
      {"lstm_b_cell", &lstm_b_cell},
      {"mm_word", &mm_word},
      {"mm_hidden", &mm_hidden},
      {"mm_image", &mm_image},
      {"mm_bias", &mm_bias},
  };
  if (config.tws) {
    out.emplace_back("decoder_proj", &decoder_proj);
  } else {
    out.emplace_back("decoder_dense", &decoder_dense);
  }
  out.emplace_back("out_bias", &out_bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Parameters::trainable_tensors() const {
  auto mutable_list = const_cast<Parameters*>(this)->trainable_tensors();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, t] : mutable_list) out.emplace_back(name, t);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> Parameters::all_tensors() {
  auto out = trainable_tensors();
  out.emplace_back("x_mean", &x_mean);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> Parameters::all_tensors() const {
  auto mutable_list = const_cast<Parameters*>(this)->all_tensors();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, t] : mutable_list) out.emplace_back(name, t);
  return out;
}

Tensor* Parameters::tensor_by_name(const std::string& name) {
  for (auto& [n, t] : all_tensors()) {
    if (n == name) return t;
  }
  return nullptr;
}

Parameters Parameters::zeros_like() const {
  Parameters z;
  z.config = config;
  z.n_original = n_original;
  z.centralized = centralized;
  auto src = all_tensors();
  for (auto& [name, t] : src) {
    Tensor* dst = nullptr;
    if (name == "embed") dst = &z.embed;
    else if (name == "embed2_w") dst = &z.embed2_w;
    else if (name == "embed2_b") dst = &z.embed2_b;
    else if (name == "lstm_w_input") dst = &z.lstm_w_input;
    else if (name == "lstm_b_input") dst = &z.lstm_b_input;
    else if (name == "lstm_w_forget") dst = &z.lstm_w_forget;
    else if (name == "lstm_b_forget") dst = &z.lstm_b_forget;
    else if (name == "lstm_w_output") dst = &z.lstm_w_output;
    else if (name == "lstm_b_output") dst = &z.lstm_b_output;
    else if (name == "lstm_w_cell") dst = &z.lstm_w_cell;
    else if (name == "lstm_b_cell") dst = &z.lstm_b_cell;
    else if (name == "mm_word") dst = &z.mm_word;
    else if (name == "mm_hidden") dst = &z.mm_hidden;
    else if (name == "mm_image") dst = &z.mm_image;
    else if (name == "mm_bias") dst = &z.mm_bias;
    else if (name == "decoder_proj") dst = &z.decoder_proj;
    else if (name == "decoder_dense") dst = &z.decoder_dense;
    else if (name == "out_bias") dst = &z.out_bias;
    else if (name == "x_mean") dst = &z.x_mean;
    if (dst != nullptr) *dst = Tensor(t->dims);
  }
  return z;
}

void Parameters::expect_finite() const {
  for (auto& [name, t] : all_tensors()) t->expect_finite(name);
}

bool FreezeMask::frozen(const std::string& name, const Tensor& t, std::size_t flat) const {
  if (tensors.count(name)) return true;
  if (name == "embed" && !embed_cols.empty()) {
    return embed_cols[flat % static_cast<std::size_t>(t.cols())] != 0;
  }
  if (name == "out_bias" && !bias_entries.empty()) {
    return bias_entries[flat] != 0;
  }
  if (name == "decoder_dense" && !decoder_dense_rows.empty()) {
    return decoder_dense_rows[flat / static_cast<std::size_t>(t.cols())] != 0;
  }
  return false;
}

FreezeMask FreezeMask::all_except_new_words(const Parameters& params, bool bias_trainable) {
  FreezeMask mask;
  for (const auto& [name, t] : params.trainable_tensors()) {
    if (name == "embed" || name == "out_bias" || (!params.config.tws && name == "decoder_dense"))
      continue;
    mask.tensors.insert(name);
  }
  int n = params.config.vocab_size;
  mask.embed_cols.assign(n, 0);
  mask.bias_entries.assign(n, 0);
  for (int w = 0; w < params.n_original; ++w) {
    mask.embed_cols[w] = 1;
    mask.bias_entries[w] = 1;
  }
  if (!bias_trainable) {
    for (int w = params.n_original; w < n; ++w) mask.bias_entries[w] = 1;
  }
  if (!params.config.tws) {
    mask.decoder_dense_rows.assign(n, 0);
    for (int w = 0; w < params.n_original; ++w) mask.decoder_dense_rows[w] = 1;
  }
  return mask;
}

Parameters init_params(const ModelConfig& config, const Vocabulary& vocab, Rng& rng) {
  ModelConfig cfg = config;
  cfg.vocab_size = vocab.size();
  cfg.validate();
  if (cfg.vocab_size != vocab.size()) throw ConfigError("config vocab size disagrees with vocabulary");

  Parameters p;
  p.config = cfg;
  p.n_original = vocab.n_original;
  p.centralized = false;

  int e1 = cfg.d_embed1, e2 = cfg.d_embed2, r = cfg.d_hidden, m = cfg.d_multimodal;
  int n = cfg.vocab_size, zdim = e2 + r;

  p.embed = uniform_matrix(e1, n, rng);
  p.embed2_w = uniform_matrix(e2, e1, rng);
  p.embed2_b = Tensor::vec(e2);
  p.lstm_w_input = uniform_matrix(r, zdim, rng);
  p.lstm_b_input = Tensor::vec(r);
  p.lstm_w_forget = uniform_matrix(r, zdim, rng);
  p.lstm_b_forget = Tensor::vec(r);
  p.lstm_b_forget.fill(1.0);
  p.lstm_w_output = uniform_matrix(r, zdim, rng);
  p.lstm_b_output = Tensor::vec(r);
  p.lstm_w_cell = uniform_matrix(r, zdim, rng);
  p.lstm_b_cell = Tensor::vec(r);
  p.mm_word = uniform_matrix(m, e2, rng);
  p.mm_hidden = uniform_matrix(m, r, rng);
  p.mm_image = uniform_matrix(m, cfg.d_image, rng);
  p.mm_bias = Tensor::vec(m);
  if (cfg.tws) {
    p.decoder_proj = uniform_matrix(e1, m, rng);
  } else {
    p.decoder_dense = uniform_matrix(n, m, rng);
  }
  p.out_bias = Tensor::vec(n);
  p.x_mean = Tensor::vec(p.decoder_input_dim());
  return p;
}

Tensor embed_lookup(const Parameters& params, int index) {
  const Tensor& w = params.embed;
  if (index < 0 || index >= w.cols())
    throw ConfigError("word index " + std::to_string(index) + " out of range");
  Tensor col = Tensor::vec(w.rows());
  for (int i = 0; i < w.rows(); ++i) col.at(i) = scaled_tanh(w.at(i, index));
  return col;
}

StepResult step(const Parameters& params, int prev_index, const LstmState& state,
                const Tensor& image_feature) {
  const ModelConfig& cfg = params.config;
  if (image_feature.dims[0] != cfg.d_image)
    throw ConfigError("image feature dimension mismatch");
  if (state.h.dims[0] != cfg.d_hidden || state.c.dims[0] != cfg.d_hidden)
    throw ConfigError("lstm state dimension mismatch");

  StepResult result;
  StepActivations& acts = result.acts;
  acts.input_index = prev_index;

  acts.e1 = embed_lookup(params, prev_index);
  acts.e2 = scaled_tanh(affine(params.embed2_w, acts.e1, params.embed2_b));

  Tensor z = concat(acts.e2, state.h);
  acts.gate_i = gate(params.lstm_w_input, params.lstm_b_input, z, false);
  acts.gate_f = gate(params.lstm_w_forget, params.lstm_b_forget, z, false);
  acts.gate_o = gate(params.lstm_w_output, params.lstm_b_output, z, false);
  acts.gate_c = gate(params.lstm_w_cell, params.lstm_b_cell, z, true);

  acts.cell = Tensor::vec(cfg.d_hidden);
  acts.cell_tanh = Tensor::vec(cfg.d_hidden);
  acts.hidden = Tensor::vec(cfg.d_hidden);
  for (int i = 0; i < cfg.d_hidden; ++i) {
    acts.cell.at(i) = acts.gate_f.at(i) * state.c.at(i) + acts.gate_i.at(i) * acts.gate_c.at(i);
    acts.cell_tanh.at(i) = std::tanh(acts.cell.at(i));
    acts.hidden.at(i) = acts.gate_o.at(i) * acts.cell_tanh.at(i);
  }

  Tensor pre_m = affine(params.mm_word, acts.e2, params.mm_bias);
  for (int i = 0; i < cfg.d_multimodal; ++i) {
    double acc = pre_m.at(i);
    const double* hrow = &params.mm_hidden.data[static_cast<std::size_t>(i) * cfg.d_hidden];
    for (int j = 0; j < cfg.d_hidden; ++j) acc += hrow[j] * acts.hidden.at(j);
    const double* irow = &params.mm_image.data[static_cast<std::size_t>(i) * cfg.d_image];
    for (int j = 0; j < cfg.d_image; ++j) acc += irow[j] * image_feature.at(j);
    pre_m.at(i) = acc;
  }
  acts.m = scaled_tanh(pre_m);

  Tensor logits = Tensor::vec(cfg.vocab_size);
  if (cfg.tws) {
    Tensor pre_x = Tensor::vec(cfg.d_embed1);
    for (int i = 0; i < cfg.d_embed1; ++i) {
      const double* row = &params.decoder_proj.data[static_cast<std::size_t>(i) * cfg.d_multimodal];
      double acc = 0.0;
      for (int j = 0; j < cfg.d_multimodal; ++j) acc += row[j] * acts.m.at(j);
      pre_x.at(i) = acc;
    }
    acts.x = cfg.decoder_linear ? pre_x : scaled_tanh(pre_x);
    // logits = embed^T (x - x_mean) + out_bias
    Tensor shifted = acts.x;
    for (int i = 0; i < cfg.d_embed1; ++i) shifted.at(i) -= params.x_mean.at(i);
    logits = params.out_bias;
    add_matvec_transposed(params.embed, shifted, logits);
  } else {
    for (int w = 0; w < cfg.vocab_size; ++w) {
      const double* row = &params.decoder_dense.data[static_cast<std::size_t>(w) * cfg.d_multimodal];
      double acc = params.out_bias.at(w);
      for (int j = 0; j < cfg.d_multimodal; ++j)
        acc += row[j] * (acts.m.at(j) - params.x_mean.at(j));
      logits.at(w) = acc;
    }
  }
  logits.expect_finite("softmax logits");

  acts.y = softmax(logits);
  result.y = acts.y;
  result.state.h = acts.hidden;
  result.state.c = acts.cell;
  return result;
}

std::pair<ForwardTrace, double> forward_sequence(const Parameters& params,
                                                 const std::vector<int>& indices,
                                                 const Tensor& image_feature) {
  if (indices.size() < 2) throw ConfigError("encoded sentence needs at least [start, end]");
  ForwardTrace trace;
  trace.image_feature = image_feature;
  trace.indices = indices;
  LstmState state = LstmState::zeros(params.config.d_hidden);
  double nll = 0.0;
  for (std::size_t t = 0; t + 1 < indices.size(); ++t) {
    StepResult r = step(params, indices[t], state, image_feature);
    r.acts.target_index = indices[t + 1];
    nll -= std::log(r.y.at(indices[t + 1]));
    state = r.state;
    trace.steps.push_back(std::move(r.acts));
  }
  if (!std::isfinite(nll)) throw NumericError("non-finite sentence likelihood");
  return {std::move(trace), nll};
}

Gradients backward_sequence(const Parameters& params, const ForwardTrace& trace,
                            const FreezeMask* frozen) {
  const ModelConfig& cfg = params.config;
  Gradients grads = params.zeros_like();
  int e1 = cfg.d_embed1, e2 = cfg.d_embed2, r = cfg.d_hidden, m = cfg.d_multimodal;

  auto want = [&](const char* name) { return frozen == nullptr || !frozen->tensor_fully_frozen(name); };
  const std::uint8_t* embed_col_frozen =
      frozen != nullptr && !frozen->embed_cols.empty() ? frozen->embed_cols.data() : nullptr;
  const std::uint8_t* dense_row_frozen =
      frozen != nullptr && !frozen->decoder_dense_rows.empty() ? frozen->decoder_dense_rows.data()
                                                               : nullptr;

  Tensor dh_next = Tensor::vec(r);
  Tensor dc_next = Tensor::vec(r);
  const Tensor zero_state = Tensor::vec(r);

  for (int t = static_cast<int>(trace.steps.size()) - 1; t >= 0; --t) {
    const StepActivations& acts = trace.steps[t];
    const Tensor& h_prev = t > 0 ? trace.steps[t - 1].hidden : zero_state;
    const Tensor& c_prev = t > 0 ? trace.steps[t - 1].cell : zero_state;

    // softmax + NLL
    Tensor dlogits = acts.y;
    dlogits.at(acts.target_index) -= 1.0;

    add_vec(dlogits, grads.out_bias);

    Tensor dm = Tensor::vec(m);
    if (cfg.tws) {
      Tensor shifted = acts.x;
      for (int i = 0; i < e1; ++i) shifted.at(i) -= params.x_mean.at(i);
      // decoder side of the embedding matrix: grad += shifted (x) dlogits
      for (int i = 0; i < e1; ++i) {
        double si = shifted.at(i);
        if (si == 0.0) continue;
        double* row = &grads.embed.data[static_cast<std::size_t>(i) * cfg.vocab_size];
        if (embed_col_frozen == nullptr) {
          for (int w = 0; w < cfg.vocab_size; ++w) row[w] += si * dlogits.at(w);
        } else {
          for (int w = 0; w < cfg.vocab_size; ++w) {
            if (!embed_col_frozen[w]) row[w] += si * dlogits.at(w);
          }
        }
      }
      Tensor dx = Tensor::vec(e1);
      for (int i = 0; i < e1; ++i) {
        const double* row = &params.embed.data[static_cast<std::size_t>(i) * cfg.vocab_size];
        double acc = 0.0;
        for (int w = 0; w < cfg.vocab_size; ++w) acc += row[w] * dlogits.at(w);
        dx.at(i) = acc;
      }
      if (!cfg.decoder_linear) {
        for (int i = 0; i < e1; ++i) dx.at(i) *= scaled_tanh_deriv(acts.x.at(i));
      }
      if (want("decoder_proj")) add_outer(dx, acts.m, grads.decoder_proj);
      add_matvec_transposed(params.decoder_proj, dx, dm);
    } else {
      Tensor shifted = acts.m;
      for (int j = 0; j < m; ++j) shifted.at(j) -= params.x_mean.at(j);
      for (int w = 0; w < cfg.vocab_size; ++w) {
        if (dense_row_frozen != nullptr && dense_row_frozen[w]) continue;
        double dw = dlogits.at(w);
        if (dw == 0.0) continue;
        double* row = &grads.decoder_dense.data[static_cast<std::size_t>(w) * m];
        for (int j = 0; j < m; ++j) row[j] += dw * shifted.at(j);
      }
      add_matvec_transposed(params.decoder_dense, dlogits, dm);
    }

    // multimodal fusion
    for (int j = 0; j < m; ++j) dm.at(j) *= scaled_tanh_deriv(acts.m.at(j));
    if (want("mm_word")) add_outer(dm, acts.e2, grads.mm_word);
    if (want("mm_hidden")) add_outer(dm, acts.hidden, grads.mm_hidden);
    if (want("mm_image")) add_outer(dm, trace.image_feature, grads.mm_image);
    add_vec(dm, grads.mm_bias);

    Tensor de2 = Tensor::vec(e2);
    add_matvec_transposed(params.mm_word, dm, de2);
    Tensor dh = dh_next;
    add_matvec_transposed(params.mm_hidden, dm, dh);

    // LSTM
    Tensor dgo = Tensor::vec(r), dc = dc_next, dgi = Tensor::vec(r), dgf = Tensor::vec(r),
           dgc = Tensor::vec(r);
    for (int i = 0; i < r; ++i) {
      dgo.at(i) = dh.at(i) * acts.cell_tanh.at(i);
      dc.at(i) += dh.at(i) * acts.gate_o.at(i) * (1.0 - acts.cell_tanh.at(i) * acts.cell_tanh.at(i));
      dgf.at(i) = dc.at(i) * c_prev.at(i);
      dgi.at(i) = dc.at(i) * acts.gate_c.at(i);
      dgc.at(i) = dc.at(i) * acts.gate_i.at(i);
    }
    Tensor dc_prev = Tensor::vec(r);
    for (int i = 0; i < r; ++i) dc_prev.at(i) = dc.at(i) * acts.gate_f.at(i);

    // through the gate nonlinearities
    for (int i = 0; i < r; ++i) {
      dgi.at(i) *= acts.gate_i.at(i) * (1.0 - acts.gate_i.at(i));
      dgf.at(i) *= acts.gate_f.at(i) * (1.0 - acts.gate_f.at(i));
      dgo.at(i) *= acts.gate_o.at(i) * (1.0 - acts.gate_o.at(i));
      dgc.at(i) *= 1.0 - acts.gate_c.at(i) * acts.gate_c.at(i);
    }

    Tensor z = concat(acts.e2, h_prev);
    if (want("lstm_w_input")) add_outer(dgi, z, grads.lstm_w_input);
    if (want("lstm_w_forget")) add_outer(dgf, z, grads.lstm_w_forget);
    if (want("lstm_w_output")) add_outer(dgo, z, grads.lstm_w_output);
    if (want("lstm_w_cell")) add_outer(dgc, z, grads.lstm_w_cell);
    add_vec(dgi, grads.lstm_b_input);
    add_vec(dgf, grads.lstm_b_forget);
    add_vec(dgo, grads.lstm_b_output);
    add_vec(dgc, grads.lstm_b_cell);

    Tensor dz = Tensor::vec(e2 + r);
    add_matvec_transposed(params.lstm_w_input, dgi, dz);
    add_matvec_transposed(params.lstm_w_forget, dgf, dz);
    add_matvec_transposed(params.lstm_w_output, dgo, dz);
    add_matvec_transposed(params.lstm_w_cell, dgc, dz);
    for (int j = 0; j < e2; ++j) de2.at(j) += dz.at(j);
    Tensor dh_prev = Tensor::vec(r);
    for (int j = 0; j < r; ++j) dh_prev.at(j) = dz.at(e2 + j);

    // embedding 2
    for (int j = 0; j < e2; ++j) de2.at(j) *= scaled_tanh_deriv(acts.e2.at(j));
    if (want("embed2_w")) add_outer(de2, acts.e1, grads.embed2_w);
    add_vec(de2, grads.embed2_b);

    // embedding 1: only the input word's column
    if (embed_col_frozen == nullptr || !embed_col_frozen[acts.input_index]) {
      Tensor de1 = Tensor::vec(e1);
      add_matvec_transposed(params.embed2_w, de2, de1);
      for (int i = 0; i < e1; ++i) {
        grads.embed.at(i, acts.input_index) += de1.at(i) * scaled_tanh_deriv(acts.e1.at(i));
      }
    }

    dh_next = dh_prev;
    dc_next = dc_prev;
  }
  return grads;
}

ParamStats param_stats(const ModelConfig& config) {
  auto size2 = [](int a, int b) { return static_cast<std::int64_t>(a) * b; };
  int e1 = config.d_embed1, e2 = config.d_embed2, r = config.d_hidden, m = config.d_multimodal;
  int n = config.vocab_size, zdim = e2 + r;

  std::int64_t embed = size2(e1, n);
  std::int64_t decoder = config.tws ? size2(e1, m) : size2(n, m);
  std::int64_t total = embed + decoder;
  total += size2(e2, e1) + e2;                     // embedding 2
  total += 4 * (size2(r, zdim) + r);               // LSTM gates
  total += size2(m, e2) + size2(m, r) + size2(m, config.d_image) + m;
  total += n;                                      // output bias

  ParamStats stats;
  stats.total = total;
  stats.embed_decoder_pair = embed + decoder;
  stats.pair_fraction = static_cast<double>(stats.embed_decoder_pair) / static_cast<double>(total);
  return stats;
}

}  // namespace nvcs
