#include "nvcs/microworld.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "nvcs/kvconfig.hpp"
#include "nvcs/tensor.hpp"

namespace nvcs {

namespace {

// Fixed template words; everything else in a caption comes from the config.
const std::vector<std::string> kTemplateWords = {"a",  "the",   "is",  "there",
                                                 "of", "photo", "and", "near"};

constexpr double kTwoObjectRate = 0.1;
// Signature strength; large enough that class identity survives the model's
// saturating layers even through an untrained projection.
constexpr double kSignatureValue = 3.0;

// The attribute modulates how strongly a class renders, so one example image
// covers only part of a concept's visual range.
double attribute_factor(int attr_index, int n_attrs) {
  if (n_attrs <= 1) return 1.0;
  return 0.5 + 1.0 * static_cast<double>(attr_index) / (n_attrs - 1);
}

struct SceneObject {
  int class_index = 0;
  int attr_index = 0;
};

std::string render_single(Rng& rng, const WorldConfig& config, const SceneObject& obj) {
  const auto& cls = config.classes[obj.class_index];
  const auto& attr = config.attributes[obj.attr_index];
  const auto& verb = cls.verbs[rng.below(cls.verbs.size())];
  switch (rng.below(4)) {
    case 0: return "a " + attr + " " + cls.name + " is " + verb;
    case 1: return "the " + attr + " " + cls.name + " is " + verb;
    case 2: return "there is a " + attr + " " + cls.name;
    default: return "a photo of a " + attr + " " + cls.name;
  }
}

std::string render_pair(Rng& rng, const WorldConfig& config, const SceneObject& first,
                        const SceneObject& second) {
  const auto& c1 = config.classes[first.class_index];
  const auto& c2 = config.classes[second.class_index];
  const auto& a1 = config.attributes[first.attr_index];
  const auto& a2 = config.attributes[second.attr_index];
  switch (rng.below(3)) {
    case 0:
      return "a " + a1 + " " + c1.name + " and a " + a2 + " " + c2.name;
    case 1:
      return "a " + a1 + " " + c1.name + " is " + c1.verbs[rng.below(c1.verbs.size())] +
             " near a " + a2 + " " + c2.name;
    default:
      return "the " + a1 + " " + c1.name + " is " + c1.verbs[rng.below(c1.verbs.size())] +
             " and the " + a2 + " " + c2.name + " is " + c2.verbs[rng.below(c2.verbs.size())];
  }
}

}  // namespace

WorldConfig WorldConfig::defaults() {
  WorldConfig config;
  config.classes = {
      {"cat", "cats", {"purring", "pouncing"}},
      {"dog", "dogs", {"barking", "fetching"}},
      {"horse", "horses", {"galloping", "neighing"}},
      {"cow", "cows", {"grazing", "mooing"}},
      {"bird", "birds", {"flying", "chirping"}},
      {"rabbit", "rabbits", {"hopping", "digging"}},
      {"goat", "goats", {"climbing", "butting"}},
      {"duck", "ducks", {"quacking", "paddling"}},
  };
  config.attributes = {"red", "blue", "big", "small"};
  config.feature_dim = 64;
  config.noise_sigma = 0.05;
  config.captions_per_image = 3;
  return config;
}

void WorldConfig::validate() const {
  if (classes.empty()) throw ConfigError("world needs at least one object class");
  if (attributes.empty()) throw ConfigError("world needs at least one attribute");
  if (captions_per_image < 1) throw ConfigError("captions_per_image must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  int slots = static_cast<int>(classes.size() + attributes.size());
  if (feature_dim < slots)
    throw ConfigError("feature_dim must cover the class+attribute signature slots (" +
                      std::to_string(slots) + ")");
  std::set<std::string> names;
  for (const auto& cls : classes) {
    if (cls.name.empty() || cls.verbs.empty())
      throw ConfigError("each class needs a name and at least one verb");
    if (!names.insert(cls.name).second) throw ConfigError("duplicate class name " + cls.name);
  }
}

const ObjectClass& WorldConfig::find_class(const std::string& name) const {
  for (const auto& cls : classes) {
    if (cls.name == name) return cls;
  }
  throw ConfigError("unknown concept class " + name);
}

std::set<std::string> WorldConfig::concept_words(const std::string& name) const {
  const auto& cls = find_class(name);
  std::set<std::string> words = {cls.name, cls.plural};
  words.insert(cls.verbs.begin(), cls.verbs.end());
  return words;
}

std::set<std::string> template_word_closure(const WorldConfig& config) {
  std::set<std::string> words(kTemplateWords.begin(), kTemplateWords.end());
  for (const auto& cls : config.classes) {
    words.insert(cls.name);
    words.insert(cls.verbs.begin(), cls.verbs.end());
  }
  words.insert(config.attributes.begin(), config.attributes.end());
  return words;
}

int signature_block_width(const WorldConfig& config) {
  int slots = static_cast<int>(config.classes.size() + config.attributes.size());
  return std::max(1, config.feature_dim / slots);
}

int signature_block_begin(const WorldConfig& config, int slot) {
  return slot * signature_block_width(config);
}

std::vector<ImageRecord> generate(const WorldConfig& config, int n_images) {
  config.validate();
  if (n_images < 1) throw ConfigError("n_images must be >= 1");
  Rng rng(config.seed);
  int n_classes = static_cast<int>(config.classes.size());
  int n_attrs = static_cast<int>(config.attributes.size());
  std::size_t combos = static_cast<std::size_t>(n_classes) * n_attrs;

  std::vector<ImageRecord> records;
  records.reserve(n_images);
  for (int i = 0; i < n_images; ++i) {
    ImageRecord rec;
    char id[16];
    std::snprintf(id, sizeof(id), "img%05d", i);
    rec.id = id;

    std::vector<SceneObject> objects;
    objects.push_back({static_cast<int>(rng.below(n_classes)), static_cast<int>(rng.below(n_attrs))});
    if (combos > 1 && rng.uniform() < kTwoObjectRate) {
      for (int attempt = 0; attempt < 16; ++attempt) {
        SceneObject second{static_cast<int>(rng.below(n_classes)),
                           static_cast<int>(rng.below(n_attrs))};
        if (second.class_index != objects[0].class_index ||
            second.attr_index != objects[0].attr_index) {
          objects.push_back(second);
          break;
        }
      }
    }

    rec.feature.assign(config.feature_dim, 0.0);
    int width = signature_block_width(config);
    for (const auto& obj : objects) {
      int class_begin = signature_block_begin(config, obj.class_index);
      int attr_begin = signature_block_begin(config, n_classes + obj.attr_index);
      double class_value = kSignatureValue * attribute_factor(obj.attr_index, n_attrs);
      for (int d = 0; d < width; ++d) {
        rec.feature[class_begin + d] += class_value;
        rec.feature[attr_begin + d] += kSignatureValue;
      }
    }
    for (auto& v : rec.feature) v += config.noise_sigma * rng.gaussian();

    for (int c = 0; c < config.captions_per_image; ++c) {
      std::string text = objects.size() == 1 ? render_single(rng, config, objects[0])
                                             : render_pair(rng, config, objects[0], objects[1]);
      rec.captions.push_back(Caption::from_text(text));
    }

    std::set<std::string> tags;
    for (const auto& obj : objects) tags.insert(config.classes[obj.class_index].name);
    rec.tags.assign(tags.begin(), tags.end());

    records.push_back(std::move(rec));
  }
  return records;
}

SplitResult holdout(const WorldConfig& config, const std::vector<ImageRecord>& records,
                    const std::string& concept_name) {
  const auto& cls = config.find_class(concept_name);
  return split_by_concept(records, config.concept_words(concept_name), {cls.name});
}

namespace {

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    std::size_t b = item.find_first_not_of(" \t");
    std::size_t e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

// "name:plural:verb1,verb2"
ObjectClass parse_class(const std::string& entry) {
  auto parts = split_list(entry, ':');
  if (parts.size() != 3)
    throw ConfigError("class entry must be name:plural:verbs, got \"" + entry + "\"");
  ObjectClass cls;
  cls.name = parts[0];
  cls.plural = parts[1];
  cls.verbs = split_list(parts[2], ',');
  return cls;
}

std::string format_classes(const WorldConfig& config) {
  std::ostringstream out;
  for (std::size_t i = 0; i < config.classes.size(); ++i) {
    if (i) out << ";";
    const auto& cls = config.classes[i];
    out << cls.name << ":" << cls.plural << ":";
    for (std::size_t v = 0; v < cls.verbs.size(); ++v) {
      if (v) out << ",";
      out << cls.verbs[v];
    }
  }
  return out.str();
}

}  // namespace

WorldConfig load_world_config(const std::filesystem::path& path) {
  KvFile kv = KvFile::parse_file(path);
  kv.require_known_keys(
      {"classes", "attributes", "feature_dim", "noise_sigma", "captions_per_image"});
  WorldConfig defaults = WorldConfig::defaults();
  WorldConfig config;
  std::string classes = kv.get_string("classes", format_classes(defaults));
  config.classes.clear();
  for (const auto& entry : split_list(classes, ';')) config.classes.push_back(parse_class(entry));
  config.attributes = split_list(kv.get_string("attributes", "red,blue,big,small"), ',');
  config.feature_dim = kv.get_int("feature_dim", defaults.feature_dim);
  config.noise_sigma = kv.get_double("noise_sigma", defaults.noise_sigma);
  config.captions_per_image = kv.get_int("captions_per_image", defaults.captions_per_image);
  for (const auto& note : kv.notices()) std::fprintf(stderr, "%s\n", note.c_str());
  config.validate();
  return config;
}

void write_world_config(const std::filesystem::path& path, const WorldConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::MissingFile, "cannot open " + path.string());
  out << "classes = " << format_classes(config) << "\n";
  out << "attributes = ";
  for (std::size_t i = 0; i < config.attributes.size(); ++i) {
    if (i) out << ",";
    out << config.attributes[i];
  }
  out << "\n";
  out << "feature_dim = " << config.feature_dim << "\n";
  out << "noise_sigma = " << config.noise_sigma << "\n";
  out << "captions_per_image = " << config.captions_per_image << "\n";
}

}  // namespace nvcs
