#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nvcs/corpus.hpp"
#include "nvcs/model.hpp"

namespace nvcs {

// One decoded test image: the generated tokens, its reference token lists and
// which test split it came from ("nc" or "base").
struct EvalEntry {
  std::string id;
  std::vector<std::string> generated;
  std::vector<std::vector<std::string>> references;
  std::string split;
  double logprob = 0.0;
};

struct EvalRun {
  std::vector<EvalEntry> entries;
};

struct SplitScores {
  int n_images = 0;
  double bleu[4] = {0.0, 0.0, 0.0, 0.0}; // B-1..B-4
};

struct WordScore {
  std::string word;
  double p = 0.0;
  double r = 0.0;
  double f = 0.0;
  bool p_undefined = false; // word never generated
  bool r_undefined = false; // word never referenced
};

struct EvalReport {
  std::map<std::string, SplitScores> splits; // keys among {"nc", "base", "all"}
  std::vector<WordScore> new_words;
  double macro_f = 0.0;
};

// Corpus-level BLEU-n: clipped modified n-gram precision, geometric mean over
// orders 1..n, closest-reference-length brevity penalty.
double bleu(const std::vector<EvalEntry>& entries, int n);

// Image-level precision/recall/f per word: p = |gen ∧ ref| / |gen|,
// r = |gen ∧ ref| / |ref| counted over test images; f is the harmonic mean,
// zero whenever either side is zero. Zero denominators report 0 with the
// undefined flag set.
std::vector<WordScore> new_word_prf(const std::vector<EvalEntry>& entries,
                                    const std::set<std::string>& new_words);

// Decodes every test image (best beam hypothesis) and assembles the report:
// BLEU-1..4 per available split, word scores over the combined split.
EvalReport evaluate(const Parameters& params, const Vocabulary& vocab,
                    const std::vector<ImageRecord>& nc_test,
                    const std::vector<ImageRecord>& base_test,
                    const std::set<std::string>& new_words, int beam_width, int max_len,
                    EvalRun* run_out = nullptr);

EvalReport report_from_run(const EvalRun& run, const std::set<std::string>& new_words);

// JSON Lines {"id", "split", "generated", "logprob"}.
void write_generations(const std::filesystem::path& path, const EvalRun& run);
// Report as JSON plus a flat CSV (k, seed, split, metric, value) for curves.
void write_report_json(const std::filesystem::path& path, const EvalReport& report);
void write_report_csv(const std::filesystem::path& path, const EvalReport& report, int k_tag,
                      std::uint64_t seed_tag);

}  // namespace nvcs
