#include "textloc/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "textloc/palette.hpp"

namespace textloc::enc {

void Vocabulary::add(const std::string& token) {
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const scene::ClassRegistry& registry) {
  Vocabulary v;
  v.add("<unk>");
  for (const char* w : {"the", "pose", "is", "of", "a", "on", "top"}) v.add(w);
  for (const char* w : {"north", "northeast", "east", "southeast", "south",
                        "southwest", "west", "northwest"})
    v.add(w);
  for (const auto& color : kPalette) v.add(color.name);
  for (const auto& cls : registry.all()) {
    std::istringstream words(cls.name);
    std::string w;
    while (words >> w) v.add(w);
  }
  return v;
}

int Vocabulary::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (std::isspace(static_cast<unsigned char>(c)))
      cleaned += ' ';
  }
  std::vector<int> out;
  std::istringstream words(cleaned);
  std::string w;
  while (words >> w) out.push_back(index_of(w));
  if (out.empty()) out.push_back(0);
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "Vocabulary::save: cannot open '", path, "'");
  for (const auto& t : tokens_) os << t << "\n";
  require(os.good(), "Vocabulary::save: write failed");
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "Vocabulary::load: cannot open '", path, "'");
  Vocabulary v;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) v.add(line);
  require(v.size() > 0 && v.tokens_[0] == "<unk>",
          "Vocabulary::load: '", path, "' is not a vocabulary file");
  return v;
}

}  // namespace textloc::enc
