#include "nvcs/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace nvcs {

namespace {

const std::string kStripChars = ".,;:!?\"()";

bool should_strip(char c) { return kStripChars.find(c) != std::string::npos; }

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError(DataError::Kind::Truncated, "unexpected end of feature file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32_le(std::istream& in) {
  std::uint32_t bits = read_u32_le(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void write_f32_le(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32_le(out, bits);
}

}  // namespace

Caption Caption::from_text(const std::string& text) {
  Caption c;
  c.raw_text = text;
  c.tokens = tokenize(text);
  return c;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = index_of.find(token);
  return it == index_of.end() ? unk_index : it->second;
}

void Vocabulary::rebuild_index() {
  index_of.clear();
  for (int i = 0; i < size(); ++i) index_of[tokens[i]] = i;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  std::istringstream in(text);
  while (in >> word) {
    std::size_t begin = 0;
    std::size_t end = word.size();
    while (begin < end && should_strip(word[begin])) ++begin;
    while (end > begin && should_strip(word[end - 1])) --end;
    if (begin == end) continue;
    std::string token = word.substr(begin, end - begin);
    for (char& ch : token) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    out.push_back(std::move(token));
  }
  return out;
}

namespace {

// (count desc, token asc) ordering shared by build_vocab and extend_vocab.
std::vector<std::string> ranked_tokens(const std::map<std::string, int>& counts, int min_count) {
  std::vector<std::pair<std::string, int>> items;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) items.emplace_back(tok, n);
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [tok, n] : items) out.push_back(std::move(tok));
  return out;
}

std::map<std::string, int> count_tokens(const std::vector<ImageRecord>& corpus) {
  std::map<std::string, int> counts;
  for (const auto& rec : corpus) {
    for (const auto& cap : rec.captions) {
      for (const auto& tok : cap.tokens) ++counts[tok];
    }
  }
  return counts;
}

}  // namespace

Vocabulary build_vocab(const std::vector<ImageRecord>& corpus, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (corpus.empty()) throw DataError(DataError::Kind::Format, "cannot build vocabulary from an empty corpus");
  Vocabulary vocab;
  vocab.tokens = {Vocabulary::kStart, Vocabulary::kEnd, Vocabulary::kUnk};
  for (auto& tok : ranked_tokens(count_tokens(corpus), min_count)) {
    if (tok == Vocabulary::kStart || tok == Vocabulary::kEnd || tok == Vocabulary::kUnk) continue;
    vocab.tokens.push_back(std::move(tok));
  }
  vocab.n_original = vocab.size();
  vocab.rebuild_index();
  return vocab;
}

std::vector<int> encode(const Caption& caption, const Vocabulary& vocab) {
  if (vocab.size() == 0) throw ConfigError("encode needs a nonempty vocabulary");
  std::vector<int> out;
  out.reserve(caption.tokens.size() + 2);
  out.push_back(vocab.start_index);
  for (const auto& tok : caption.tokens) out.push_back(vocab.lookup(tok));
  out.push_back(vocab.end_index);
  return out;
}

SplitResult split_by_concept(const std::vector<ImageRecord>& corpus,
                             const std::set<std::string>& concept_words,
                             const std::set<std::string>& concept_tags) {
  if (concept_words.empty() && concept_tags.empty())
    throw ConfigError("split_by_concept needs at least one concept word or tag");
  SplitResult result;
  for (const auto& rec : corpus) {
    bool matched = false;
    for (const auto& tag : rec.tags) {
      if (concept_tags.count(tag)) matched = true;
    }
    for (const auto& cap : rec.captions) {
      for (const auto& tok : cap.tokens) {
        if (concept_words.count(tok)) {
          matched = true;
          result.matched_words.insert(tok);
        }
      }
    }
    (matched ? result.nc_set : result.base_set).push_back(rec);
  }
  return result;
}

std::pair<Vocabulary, std::vector<std::string>> extend_vocab(
    const Vocabulary& vocab, const std::vector<ImageRecord>& nc_corpus, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (vocab.size() < 3) throw ConfigError("extend_vocab needs a built vocabulary");
  Vocabulary extended = vocab;
  std::vector<std::string> added;
  for (auto& tok : ranked_tokens(count_tokens(nc_corpus), min_count)) {
    if (extended.contains(tok)) continue;
    extended.index_of[tok] = extended.size();
    extended.tokens.push_back(tok);
    added.push_back(std::move(tok));
  }
  return {std::move(extended), std::move(added)};
}

void write_feature_file(const std::filesystem::path& path,
                        const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  std::size_t dim = rows.empty() ? 0 : rows.front().size();
  out.write("NVCF", 4);
  write_u32_le(out, static_cast<std::uint32_t>(rows.size()));
  write_u32_le(out, static_cast<std::uint32_t>(dim));
  for (const auto& row : rows) {
    if (row.size() != dim)
      throw DataError(DataError::Kind::DimMismatch, "inconsistent feature dimensions");
    for (double v : row) write_f32_le(out, static_cast<float>(v));
  }
  if (!out) throw DataError(DataError::Kind::Format, "failed writing " + path.string());
}

std::vector<std::vector<double>> load_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NVCF", 4) != 0)
    throw DataError(DataError::Kind::BadMagic, "not a feature file: " + path.string());
  std::uint32_t count = read_u32_le(in);
  std::uint32_t dim = read_u32_le(in);
  std::vector<std::vector<double>> rows(count);
  for (auto& row : rows) {
    row.resize(dim);
    for (auto& v : row) v = static_cast<double>(read_f32_le(in));
  }
  return rows;
}

namespace {

struct FeatureCache {
  std::filesystem::path base_dir;
  std::map<std::string, std::vector<std::vector<double>>> files;

  const std::vector<double>& resolve(const std::string& ref) {
    auto hash = ref.rfind('#');
    if (hash == std::string::npos)
      throw DataError(DataError::Kind::Format, "feature_ref missing '#row': " + ref);
    std::string name = ref.substr(0, hash);
    std::size_t row = 0;
    try {
      row = std::stoul(ref.substr(hash + 1));
    } catch (const std::exception&) {
      throw DataError(DataError::Kind::Format, "bad feature_ref row: " + ref);
    }
    auto it = files.find(name);
    if (it == files.end()) it = files.emplace(name, load_feature_file(base_dir / name)).first;
    if (row >= it->second.size())
      throw DataError(DataError::Kind::Format, "feature_ref row out of range: " + ref);
    return it->second[row];
  }
};

}  // namespace

void write_corpus(const std::filesystem::path& jsonl_path,
                  const std::vector<ImageRecord>& records,
                  const std::string& features_name) {
  std::ofstream out(jsonl_path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + jsonl_path.string());
  std::vector<std::vector<double>> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    nlohmann::json obj;
    obj["id"] = rec.id;
    std::vector<std::string> texts;
    for (const auto& cap : rec.captions) texts.push_back(cap.raw_text);
    obj["captions"] = texts;
    obj["tags"] = rec.tags;
    obj["feature_ref"] = features_name + "#" + std::to_string(i);
    out << obj.dump() << "\n";
    rows.push_back(rec.feature);
  }
  if (!out) throw DataError(DataError::Kind::Format, "failed writing " + jsonl_path.string());
  write_feature_file(jsonl_path.parent_path() / features_name, rows);
}

std::vector<ImageRecord> load_corpus(const std::filesystem::path& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw DataError(DataError::Kind::MissingFile, "cannot open " + jsonl_path.string());
  FeatureCache cache{jsonl_path.parent_path(), {}};
  std::vector<ImageRecord> records;
  std::string line;
  std::size_t lineno = 0;
  std::size_t feature_dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(DataError::Kind::Format,
                      jsonl_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("id") || !obj.contains("captions"))
      throw DataError(DataError::Kind::Format,
                      jsonl_path.string() + ":" + std::to_string(lineno) + ": record needs id and captions");
    ImageRecord rec;
    rec.id = obj["id"].get<std::string>();
    for (const auto& text : obj["captions"])
      rec.captions.push_back(Caption::from_text(text.get<std::string>()));
    if (rec.captions.empty())
      throw DataError(DataError::Kind::Format, "record " + rec.id + " has no captions");
    if (obj.contains("tags"))
      rec.tags = obj["tags"].get<std::vector<std::string>>();
    if (obj.contains("features")) {
      rec.feature = obj["features"].get<std::vector<double>>();
    } else if (obj.contains("feature_ref")) {
      rec.feature = cache.resolve(obj["feature_ref"].get<std::string>());
    } else {
      throw DataError(DataError::Kind::Format, "record " + rec.id + " has neither features nor feature_ref");
    }
    if (records.empty()) {
      feature_dim = rec.feature.size();
    } else if (rec.feature.size() != feature_dim) {
      throw DataError(DataError::Kind::DimMismatch,
                      "record " + rec.id + " feature dimension differs from corpus");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_concept_file(const std::filesystem::path& path, const ConceptSpec& spec) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  bool first = true;
  for (const auto& tag : spec.tags) {
    if (!first) out << "\t";
    out << tag;
    first = false;
  }
  out << "\n";
  for (const auto& word : spec.words) out << word << "\n";
}

ConceptSpec load_concept_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  ConceptSpec spec;
  std::string line;
  if (!std::getline(in, line))
    throw DataError(DataError::Kind::Format, "empty concept file: " + path.string());
  std::istringstream tags(line);
  std::string tag;
  while (std::getline(tags, tag, '\t')) {
    if (!tag.empty()) spec.tags.insert(tag);
  }
  while (std::getline(in, line)) {
    if (!line.empty()) spec.words.insert(line);
  }
  if (spec.tags.empty() && spec.words.empty())
    throw DataError(DataError::Kind::Format, "concept file defines no tags or words");
  return spec;
}

void write_vocab_file(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  for (const auto& tok : vocab.tokens) out << tok << "\n";
  out << "#n_original=" << vocab.n_original << "\n";
}

Vocabulary load_vocab_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  Vocabulary vocab;
  vocab.tokens.clear();
  vocab.n_original = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#n_original=", 0) == 0) {
      try {
        vocab.n_original = std::stoi(line.substr(std::strlen("#n_original=")));
      } catch (const std::exception&) {
        throw DataError(DataError::Kind::Format, "bad n_original line in " + path.string());
      }
      break;
    }
    if (!line.empty()) vocab.tokens.push_back(line);
  }
  if (vocab.n_original < 0)
    throw DataError(DataError::Kind::Format, "vocabulary file missing #n_original: " + path.string());
  if (vocab.size() < 3 || vocab.tokens[0] != Vocabulary::kStart ||
      vocab.tokens[1] != Vocabulary::kEnd || vocab.tokens[2] != Vocabulary::kUnk)
    throw DataError(DataError::Kind::Format, "vocabulary file must start with the sentinel tokens");
  if (vocab.n_original < 3 || vocab.n_original > vocab.size())
    throw DataError(DataError::Kind::Format, "n_original out of range in " + path.string());
  vocab.rebuild_index();
  if (static_cast<int>(vocab.index_of.size()) != vocab.size())
    throw DataError(DataError::Kind::Format, "duplicate tokens in " + path.string());
  return vocab;
}

}  // namespace nvcs
