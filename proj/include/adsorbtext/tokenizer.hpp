#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace adsorbtext {

/// Whitespace run preceding a token. Anything other than these is read back as a single space.
enum class Gap : std::uint8_t { none = 0, space = 1, newline = 2, paragraph = 3, synthetic = 255 };

struct PreToken {
  std::string text;
  Gap gap = Gap::none;
};

/// Splits on whitespace and isolates `<s> </s> [ ] ( ) ,` as standalone tokens.
std::vector<PreToken> pretokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kPad = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kMask = 4;
  static constexpr int kSpecialCount = 5;

  Vocabulary();

  /// Tokens with corpus frequency >= min_freq, sorted by (frequency desc, token asc)
  /// after the five specials. Throws Error on an empty corpus or min_freq < 1.
  static Vocabulary build(const std::vector<std::string>& corpus, int min_freq = 1);

  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const;
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }
  std::size_t size() const { return tokens_.size(); }
  static bool is_special(int id) { return id >= 0 && id < kSpecialCount; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::uint64_t hash() const;
  std::string to_text() const;
  static Vocabulary from_text(std::string_view text, const std::string& source = "<memory>");
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr std::size_t kDefaultMaxPositions = 512;

struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::uint8_t> attention_mask;
  /// Per position; Gap::synthetic marks markers the encoder inserted.
  std::vector<Gap> gaps;

  std::size_t real_length() const;
};

/// bos + body + eos, truncated (keeping bos/eos) and padded to max_positions.
/// A leading "<s>" or trailing "</s>" in the text is used as the marker itself.
TokenSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_positions = kDefaultMaxPositions);
std::string decode(const TokenSequence& seq, const Vocabulary& vocab);

/// Surface words are maximal runs of non-marker tokens with no whitespace between them.
struct WordAlignment {
  std::vector<std::string> words;
  /// For each real position: word index, or -1 for bos/eos markers.
  std::vector<int> word_of_token;
};
WordAlignment align_words(const TokenSequence& seq, const Vocabulary& vocab);

struct MaskedSequence {
  TokenSequence seq;
  /// (position, original id) for every selected position.
  std::vector<std::pair<std::size_t, int>> labels;
};

inline constexpr double kDefaultMaskRate = 0.15;

/// Selects each non-special real position with probability `rate`; selected
/// positions become mask (80%), a random non-special token (10%) or stay (10%).
MaskedSequence dynamic_mask(const TokenSequence& seq, const Vocabulary& vocab, double rate, std::uint64_t seed);

}  // namespace adsorbtext
