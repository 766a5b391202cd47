#pragma once

#include <string>
#include <vector>

#include "nvcs/model.hpp"

namespace nvcs {

struct ScoredSequence {
  std::vector<int> indices; // [start, content..., end]
  double logprob = 0.0;

  std::vector<std::string> content_tokens(const Vocabulary& vocab) const;
  std::string text(const Vocabulary& vocab) const;
};

// Length-bounded beam search. Per step every live hypothesis is expanded over
// the vocabulary (minus the start and unk tokens), the best K candidates
// survive, and candidates emitting the end token move to a completed pool.
// Live hypotheses reaching max_len content tokens are force-completed with
// the end token. max_len counts content tokens, ties break toward the lower
// token index, and the search stops early once the K best completed
// hypotheses already beat every live prefix score.
std::vector<ScoredSequence> generate(const Parameters& params, const Vocabulary& vocab,
                                     const Tensor& image_feature, int beam_width, int max_len);

}  // namespace nvcs
