#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "textloc/scene.hpp"

namespace textloc::enc {

/// Closed vocabulary over the template grammar: function words, compass
/// words, palette names and class-name words. Index 0 is the unknown token.
class Vocabulary {
 public:
  static Vocabulary build(const scene::ClassRegistry& registry);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Unknown tokens map to index 0.
  int index_of(const std::string& token) const;

  /// Lowercases, strips punctuation, splits on whitespace. Empty text yields
  /// a single unknown token.
  std::vector<int> tokenize(const std::string& text) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace textloc::enc
