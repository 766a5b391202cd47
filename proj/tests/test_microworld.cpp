#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>

#include "doctest.h"
#include "json.hpp"
#include "nvcs/microworld.hpp"

using namespace nvcs;

namespace {

std::string serialize(const std::vector<ImageRecord>& records) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& rec : records) {
    nlohmann::json obj;
    obj["id"] = rec.id;
    obj["feature"] = rec.feature;
    std::vector<std::string> caps;
    for (const auto& cap : rec.captions) caps.push_back(cap.raw_text);
    obj["captions"] = caps;
    obj["tags"] = rec.tags;
    out.push_back(obj);
  }
  return out.dump();
}

bool scene_mentions(const ImageRecord& rec, const std::set<std::string>& words) {
  for (const auto& cap : rec.captions) {
    for (const auto& tok : cap.tokens) {
      if (words.count(tok)) return true;
    }
  }
  return false;
}

}  // namespace

TEST_CASE("same seed gives byte-identical corpora") {
  WorldConfig config = WorldConfig::defaults();
  config.seed = 99;
  auto a = generate(config, 40);
  auto b = generate(config, 40);
  CHECK(serialize(a) == serialize(b));

  config.seed = 100;
  auto c = generate(config, 40);
  CHECK(serialize(a) != serialize(c));
}

TEST_CASE("degenerate world with zero noise repeats the same feature") {
  WorldConfig config;
  config.classes = {{"cat", "cats", {"purring"}}};
  config.attributes = {"red"};
  config.feature_dim = 2;
  config.noise_sigma = 0.0;
  config.captions_per_image = 1;
  config.seed = 1;
  auto records = generate(config, 2);
  REQUIRE(records.size() == 2);
  CHECK(records[0].feature == records[1].feature);
  CHECK(records[0].feature[0] == records[0].feature[1]);
  CHECK(records[0].feature[0] > 0.0);
}

TEST_CASE("class presence shows up in tags and captions") {
  WorldConfig config = WorldConfig::defaults();
  config.seed = 7;
  auto records = generate(config, 60);
  bool saw_cat = false;
  for (const auto& rec : records) {
    bool tagged = std::find(rec.tags.begin(), rec.tags.end(), "cat") != rec.tags.end();
    if (!tagged) continue;
    saw_cat = true;
    CHECK(scene_mentions(rec, {"cat", "cats"}));
  }
  CHECK(saw_cat);
}

TEST_CASE("features of scenes with disjoint objects use disjoint signature blocks") {
  WorldConfig config = WorldConfig::defaults();
  config.noise_sigma = 0.0;
  config.seed = 13;
  auto records = generate(config, 50);
  int n_classes = static_cast<int>(config.classes.size());
  int slots = n_classes + static_cast<int>(config.attributes.size());
  int width = signature_block_width(config);
  for (const auto& rec : records) {
    // nonzero class blocks must exactly match the tags
    for (int c = 0; c < n_classes; ++c) {
      bool tagged = std::find(rec.tags.begin(), rec.tags.end(), config.classes[c].name) !=
                    rec.tags.end();
      for (int d = 0; d < width; ++d)
        CHECK((rec.feature[signature_block_begin(config, c) + d] != 0.0) == tagged);
    }
    // dims past the signature blocks stay zero without noise
    for (std::size_t d = static_cast<std::size_t>(slots) * width; d < rec.feature.size(); ++d)
      CHECK(rec.feature[d] == 0.0);
  }
}

TEST_CASE("caption vocabulary stays inside the template closure") {
  WorldConfig config = WorldConfig::defaults();
  config.seed = 21;
  auto records = generate(config, 200);
  auto closure = template_word_closure(config);
  Vocabulary vocab = build_vocab(records, 1);
  CHECK(vocab.size() <= static_cast<int>(closure.size()) + 3);
  for (int i = 3; i < vocab.size(); ++i) CHECK(closure.count(vocab.tokens[i]) == 1);
}

TEST_CASE("holdout matches a brute-force scan") {
  WorldConfig config = WorldConfig::defaults();
  config.seed = 31;
  auto records = generate(config, 120);
  SplitResult split = holdout(config, records, "cat");
  auto family = config.concept_words("cat");

  std::size_t expected_nc = 0;
  for (const auto& rec : records) {
    bool tagged = std::find(rec.tags.begin(), rec.tags.end(), "cat") != rec.tags.end();
    if (tagged || scene_mentions(rec, family)) ++expected_nc;
  }
  CHECK(split.nc_set.size() == expected_nc);
  CHECK(split.base_set.size() + split.nc_set.size() == records.size());
  for (const auto& rec : split.base_set) CHECK_FALSE(scene_mentions(rec, family));

  CHECK_THROWS_AS(holdout(config, records, "unicorn"), ConfigError);
}

TEST_CASE("holdout edge splits") {
  WorldConfig config = WorldConfig::defaults();
  config.seed = 41;
  auto records = generate(config, 80);
  auto family = config.concept_words("cat");

  std::vector<ImageRecord> no_cat, only_cat;
  for (const auto& rec : records) {
    bool has = std::find(rec.tags.begin(), rec.tags.end(), "cat") != rec.tags.end() ||
               scene_mentions(rec, family);
    (has ? only_cat : no_cat).push_back(rec);
  }
  REQUIRE(!no_cat.empty());
  REQUIRE(!only_cat.empty());

  CHECK(holdout(config, no_cat, "cat").nc_set.empty());
  CHECK(holdout(config, only_cat, "cat").base_set.empty());
}

TEST_CASE("config validation") {
  WorldConfig config = WorldConfig::defaults();
  config.feature_dim = 3; // fewer than the signature slots
  CHECK_THROWS_AS(config.validate(), ConfigError);

  WorldConfig config2 = WorldConfig::defaults();
  config2.captions_per_image = 0;
  CHECK_THROWS_AS(config2.validate(), ConfigError);

  WorldConfig config3 = WorldConfig::defaults();
  config3.noise_sigma = -0.1;
  CHECK_THROWS_AS(config3.validate(), ConfigError);
}
