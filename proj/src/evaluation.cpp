#include "nvcs/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "nvcs/decoding.hpp"

namespace nvcs {

namespace {

std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<EvalEntry>& entries, int n) {
  if (n < 1 || n > 4) throw ConfigError("bleu order must be in 1..4");
  if (entries.empty()) throw DataError(DataError::Kind::Format, "bleu over no entries");

  double log_precision_sum = 0.0;
  for (int order = 1; order <= n; ++order) {
    long long matched = 0;
    long long total = 0;
    for (const auto& entry : entries) {
      auto hyp_counts = ngram_counts(entry.generated, order);
      std::map<std::string, int> max_ref;
      for (const auto& ref : entry.references) {
        for (const auto& [gram, count] : ngram_counts(ref, order))
          max_ref[gram] = std::max(max_ref[gram], count);
      }
      for (const auto& [gram, count] : hyp_counts) {
        auto it = max_ref.find(gram);
        matched += std::min(count, it == max_ref.end() ? 0 : it->second);
        total += count;
      }
    }
    if (matched == 0 || total == 0) return 0.0;
    log_precision_sum += std::log(static_cast<double>(matched) / static_cast<double>(total));
  }

  long long hyp_len = 0;
  long long ref_len = 0;
  for (const auto& entry : entries) {
    long long h = static_cast<long long>(entry.generated.size());
    hyp_len += h;
    long long best = -1;
    for (const auto& ref : entry.references) {
      long long r = static_cast<long long>(ref.size());
      if (best < 0 || std::llabs(r - h) < std::llabs(best - h) ||
          (std::llabs(r - h) == std::llabs(best - h) && r < best)) {
        best = r;
      }
    }
    ref_len += best < 0 ? 0 : best;
  }
  if (hyp_len == 0) return 0.0;
  double bp = std::exp(std::min(0.0, 1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len)));
  return bp * std::exp(log_precision_sum / n);
}

std::vector<WordScore> new_word_prf(const std::vector<EvalEntry>& entries,
                                    const std::set<std::string>& new_words) {
  if (new_words.empty()) throw ConfigError("new_word_prf needs at least one word");
  std::vector<WordScore> scores;
  for (const auto& word : new_words) {
    long long n_gen = 0, n_ref = 0, n_both = 0;
    for (const auto& entry : entries) {
      bool in_gen =
          std::find(entry.generated.begin(), entry.generated.end(), word) != entry.generated.end();
      bool in_ref = false;
      for (const auto& ref : entry.references) {
        if (std::find(ref.begin(), ref.end(), word) != ref.end()) {
          in_ref = true;
          break;
        }
      }
      if (in_gen) ++n_gen;
      if (in_ref) ++n_ref;
      if (in_gen && in_ref) ++n_both;
    }
    WordScore score;
    score.word = word;
    score.p_undefined = n_gen == 0;
    score.r_undefined = n_ref == 0;
    score.p = n_gen == 0 ? 0.0 : static_cast<double>(n_both) / static_cast<double>(n_gen);
    score.r = n_ref == 0 ? 0.0 : static_cast<double>(n_both) / static_cast<double>(n_ref);
    score.f = (score.p == 0.0 || score.r == 0.0) ? 0.0
                                                 : 2.0 * score.p * score.r / (score.p + score.r);
    scores.push_back(std::move(score));
  }
  return scores;
}

EvalReport report_from_run(const EvalRun& run, const std::set<std::string>& new_words) {
  EvalReport report;
  std::vector<EvalEntry> nc, base;
  for (const auto& entry : run.entries) {
    (entry.split == "nc" ? nc : base).push_back(entry);
  }

  auto score_split = [&](const std::string& name, const std::vector<EvalEntry>& entries) {
    if (entries.empty()) return;
    SplitScores s;
    s.n_images = static_cast<int>(entries.size());
    for (int order = 1; order <= 4; ++order) s.bleu[order - 1] = bleu(entries, order);
    report.splits[name] = s;
  };
  score_split("nc", nc);
  score_split("base", base);
  score_split("all", run.entries);

  if (!new_words.empty() && !run.entries.empty()) {
    report.new_words = new_word_prf(run.entries, new_words);
    double sum = 0.0;
    for (const auto& w : report.new_words) sum += w.f;
    report.macro_f = sum / static_cast<double>(report.new_words.size());
  }
  return report;
}

EvalReport evaluate(const Parameters& params, const Vocabulary& vocab,
                    const std::vector<ImageRecord>& nc_test,
                    const std::vector<ImageRecord>& base_test,
                    const std::set<std::string>& new_words, int beam_width, int max_len,
                    EvalRun* run_out) {
  EvalRun run;
  auto decode_split = [&](const std::vector<ImageRecord>& records, const std::string& split) {
    for (const auto& rec : records) {
      Tensor feature = Tensor::vec(static_cast<int>(rec.feature.size()));
      std::copy(rec.feature.begin(), rec.feature.end(), feature.data.begin());
      auto sequences = generate(params, vocab, feature, beam_width, max_len);
      if (sequences.empty()) throw NumericError("beam search returned no hypotheses");
      EvalEntry entry;
      entry.id = rec.id;
      entry.split = split;
      entry.generated = sequences.front().content_tokens(vocab);
      entry.logprob = sequences.front().logprob;
      for (const auto& cap : rec.captions) entry.references.push_back(cap.tokens);
      run.entries.push_back(std::move(entry));
    }
  };
  decode_split(nc_test, "nc");
  decode_split(base_test, "base");

  EvalReport report = report_from_run(run, new_words);
  if (run_out != nullptr) *run_out = std::move(run);
  return report;
}

void write_generations(const std::filesystem::path& path, const EvalRun& run) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  for (const auto& entry : run.entries) {
    nlohmann::json obj;
    obj["id"] = entry.id;
    obj["split"] = entry.split;
    std::string text;
    for (const auto& tok : entry.generated) {
      if (!text.empty()) text += " ";
      text += tok;
    }
    obj["generated"] = text;
    obj["logprob"] = entry.logprob;
    out << obj.dump() << "\n";
  }
}

namespace {

nlohmann::json split_json(const SplitScores& s) {
  return {{"n_images", s.n_images}, {"bleu1", s.bleu[0]}, {"bleu2", s.bleu[1]},
          {"bleu3", s.bleu[2]},     {"bleu4", s.bleu[3]}};
}

}  // namespace

void write_report_json(const std::filesystem::path& path, const EvalReport& report) {
  nlohmann::json obj;
  for (const auto& [name, scores] : report.splits) obj["splits"][name] = split_json(scores);
  obj["new_words"] = nlohmann::json::array();
  for (const auto& w : report.new_words) {
    obj["new_words"].push_back({{"word", w.word},
                                {"p", w.p},
                                {"r", w.r},
                                {"f", w.f},
                                {"p_undefined", w.p_undefined},
                                {"r_undefined", w.r_undefined}});
  }
  obj["macro_f"] = report.macro_f;
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  out << obj.dump(2) << "\n";
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report, int k_tag,
                      std::uint64_t seed_tag) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  out << "k,seed,split,metric,value\n";
  char line[192];
  auto row = [&](const std::string& split, const std::string& metric, double value) {
    std::snprintf(line, sizeof(line), "%d,%llu,%s,%s,%.9f\n", k_tag,
                  static_cast<unsigned long long>(seed_tag), split.c_str(), metric.c_str(), value);
    out << line;
  };
  for (const auto& [name, scores] : report.splits) {
    for (int order = 1; order <= 4; ++order)
      row(name, "bleu-" + std::to_string(order), scores.bleu[order - 1]);
  }
  for (const auto& w : report.new_words) {
    row("all", "p:" + w.word, w.p);
    row("all", "r:" + w.word, w.r);
    row("all", "f:" + w.word, w.f);
  }
  row("all", "macro_f", report.macro_f);
}

}  // namespace nvcs
