#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nvcs/errors.hpp"

namespace nvcs {

struct Caption {
  std::string raw_text;
  std::vector<std::string> tokens;

  static Caption from_text(const std::string& text);
};

struct ImageRecord {
  std::string id;
  std::vector<double> feature;
  std::vector<Caption> captions;
  std::vector<std::string> tags;
};

// Ordered token list with sentinel tokens at indices 0..2 and a partition
// boundary: indices < n_original are the original words, indices >=
// n_original are novel-concept words appended by extend_vocab.
struct Vocabulary {
  static constexpr const char* kStart = "w_start";
  static constexpr const char* kEnd = "w_end";
  static constexpr const char* kUnk = "w_unk";

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index_of;
  int start_index = 0;
  int end_index = 1;
  int unk_index = 2;
  int n_original = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  bool contains(const std::string& token) const { return index_of.count(token) > 0; }
  // unk_index for out-of-vocabulary tokens.
  int lookup(const std::string& token) const;
  void rebuild_index();
};

struct SplitResult {
  std::vector<ImageRecord> base_set;
  std::vector<ImageRecord> nc_set;
  std::set<std::string> matched_words;
};

// Lowercases, splits on whitespace and strips leading/trailing . , ; : ! ? " ( )
// from each token. Possessives and hyphens are kept intact.
std::vector<std::string> tokenize(const std::string& text);

// Tokens with corpus frequency >= min_count, ordered by descending frequency
// then lexicographically, behind the three sentinels. n_original = N.
Vocabulary build_vocab(const std::vector<ImageRecord>& corpus, int min_count);

// [start] ++ token indices (unk for OOV) ++ [end]
std::vector<int> encode(const Caption& caption, const Vocabulary& vocab);

// A record lands in nc_set iff any tag is in concept_tags or any caption
// token is in concept_words.
SplitResult split_by_concept(const std::vector<ImageRecord>& corpus,
                             const std::set<std::string>& concept_words,
                             const std::set<std::string>& concept_tags);

// Appends unseen nc-corpus tokens with frequency >= min_count after the
// existing tokens; existing indices and n_original are unchanged. Returns the
// extended vocabulary and the appended tokens in appended order.
std::pair<Vocabulary, std::vector<std::string>> extend_vocab(
    const Vocabulary& vocab, const std::vector<ImageRecord>& nc_corpus, int min_count);

// ---- file formats ----

// Binary feature file: magic "NVCF", u32-le count, u32-le dim, count*dim
// f32-le values row-major.
void write_feature_file(const std::filesystem::path& path,
                        const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> load_feature_file(const std::filesystem::path& path);

// JSON Lines corpus, one object per line:
//   {"id": ..., "captions": [...], "tags": [...], "feature_ref": "file#row"}
// or with "features": [...] inline. write_corpus always emits feature_ref
// entries pointing into a sibling feature file named `features_name`.
void write_corpus(const std::filesystem::path& jsonl_path,
                  const std::vector<ImageRecord>& records,
                  const std::string& features_name = "features.bin");
std::vector<ImageRecord> load_corpus(const std::filesystem::path& jsonl_path);

struct ConceptSpec {
  std::set<std::string> tags;
  std::set<std::string> words;
};

// Plain text: first line tab-separated tag names, then one concept word per line.
void write_concept_file(const std::filesystem::path& path, const ConceptSpec& spec);
ConceptSpec load_concept_file(const std::filesystem::path& path);

// Plain text, one token per line in index order, lines 1-3 the sentinels,
// trailing metadata line "#n_original=<int>".
void write_vocab_file(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary load_vocab_file(const std::filesystem::path& path);

}  // namespace nvcs
