#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "nvcs/corpus.hpp"

namespace nvcs {

struct ObjectClass {
  std::string name;
  std::string plural;
  std::vector<std::string> verbs;
};

// Synthetic world: scenes of one or two (class, attribute) objects rendered
// as block-structured feature vectors plus templated captions. Stands in for
// the image datasets at desk scale.
struct WorldConfig {
  std::vector<ObjectClass> classes;
  std::vector<std::string> attributes;
  int feature_dim = 64;
  double noise_sigma = 0.05;
  int captions_per_image = 3;
  std::uint64_t seed = 0;

  static WorldConfig defaults();

  void validate() const;
  const ObjectClass& find_class(const std::string& name) const;
  // {name, plural} plus the class verbs; the word family used for holdout.
  std::set<std::string> concept_words(const std::string& name) const;
};

// Every caption word the generator can emit (template words, class names,
// verbs, attributes).
std::set<std::string> template_word_closure(const WorldConfig& config);

// Feature layout: one signature block per slot (classes first, then
// attributes); blocks split the feature budget evenly, at least one
// dimension each.
int signature_block_width(const WorldConfig& config);
int signature_block_begin(const WorldConfig& config, int slot);

// Deterministic in config.seed. Feature = class/attribute signature blocks
// plus Gaussian noise; tags = class names present in the scene.
std::vector<ImageRecord> generate(const WorldConfig& config, int n_images);

// split_by_concept with the concept's word family and its class-name tag.
SplitResult holdout(const WorldConfig& config, const std::vector<ImageRecord>& records,
                    const std::string& concept_name);

// key=value world config file (classes/attributes/feature_dim/noise_sigma/
// captions_per_image).
WorldConfig load_world_config(const std::filesystem::path& path);
void write_world_config(const std::filesystem::path& path, const WorldConfig& config);

}  // namespace nvcs
