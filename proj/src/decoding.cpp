#include "nvcs/decoding.hpp"

#include <algorithm>
#include <cmath>

namespace nvcs {

std::vector<std::string> ScoredSequence::content_tokens(const Vocabulary& vocab) const {
  std::vector<std::string> out;
  for (std::size_t i = 1; i + 1 < indices.size(); ++i) out.push_back(vocab.tokens[indices[i]]);
  return out;
}

std::string ScoredSequence::text(const Vocabulary& vocab) const {
  std::string out;
  for (const auto& tok : content_tokens(vocab)) {
    if (!out.empty()) out += " ";
    out += tok;
  }
  return out;
}

namespace {

struct Hypothesis {
  std::vector<int> indices;
  double logprob = 0.0;
  LstmState state;
};

struct Candidate {
  double logprob;
  int parent;
  int token;
};

}  // namespace

std::vector<ScoredSequence> generate(const Parameters& params, const Vocabulary& vocab,
                                     const Tensor& image_feature, int beam_width, int max_len) {
  if (beam_width < 1) throw ConfigError("beam width must be >= 1");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (vocab.size() != params.config.vocab_size)
    throw ConfigError("vocabulary size disagrees with the model");

  std::vector<Hypothesis> live;
  live.push_back({{vocab.start_index}, 0.0, LstmState::zeros(params.config.d_hidden)});
  std::vector<ScoredSequence> completed;

  auto kth_completed = [&]() {
    // score of the K-th best completed hypothesis (completed is kept sorted)
    return completed[beam_width - 1].logprob;
  };

  for (int depth = 0; /* until break */; ++depth) {
    if (live.empty()) break;
    if (static_cast<int>(completed.size()) >= beam_width) {
      double best_live = live.front().logprob;
      for (const auto& h : live) best_live = std::max(best_live, h.logprob);
      if (kth_completed() >= best_live) break; // no live prefix can still win
    }

    std::vector<StepResult> steps;
    steps.reserve(live.size());
    for (const auto& hyp : live)
      steps.push_back(step(params, hyp.indices.back(), hyp.state, image_feature));

    if (depth == max_len) {
      for (std::size_t i = 0; i < live.size(); ++i) {
        ScoredSequence seq;
        seq.indices = live[i].indices;
        seq.indices.push_back(vocab.end_index);
        seq.logprob = live[i].logprob + std::log(steps[i].y.at(vocab.end_index));
        completed.push_back(std::move(seq));
      }
      break;
    }

    std::vector<Candidate> candidates;
    candidates.reserve(live.size() * vocab.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (int tok = 0; tok < vocab.size(); ++tok) {
        if (tok == vocab.start_index || tok == vocab.unk_index) continue;
        candidates.push_back(
            {live[i].logprob + std::log(steps[i].y.at(tok)), static_cast<int>(i), tok});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });

    std::vector<Hypothesis> next_live;
    for (const auto& cand : candidates) {
      if (static_cast<int>(next_live.size()) >= beam_width) break;
      if (cand.token == vocab.end_index) {
        ScoredSequence seq;
        seq.indices = live[cand.parent].indices;
        seq.indices.push_back(vocab.end_index);
        seq.logprob = cand.logprob;
        completed.push_back(std::move(seq));
      } else {
        Hypothesis hyp;
        hyp.indices = live[cand.parent].indices;
        hyp.indices.push_back(cand.token);
        hyp.logprob = cand.logprob;
        hyp.state = steps[cand.parent].state;
        next_live.push_back(std::move(hyp));
      }
    }
    live = std::move(next_live);
    std::stable_sort(completed.begin(), completed.end(),
                     [](const ScoredSequence& a, const ScoredSequence& b) {
                       return a.logprob > b.logprob;
                     });
  }

  std::stable_sort(completed.begin(), completed.end(),
                   [](const ScoredSequence& a, const ScoredSequence& b) {
                     return a.logprob > b.logprob;
                   });
  if (static_cast<int>(completed.size()) > beam_width) completed.resize(beam_width);
  return completed;
}

}  // namespace nvcs
