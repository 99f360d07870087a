#include "adsorbtext/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <random>
#include <sstream>

#include "adsorbtext/io.hpp"

namespace adsorbtext {

namespace {

constexpr std::array<std::string_view, 5> kSpecialTokens{"<s>", "<pad>", "</s>", "<unk>", "<mask>"};
constexpr std::array<std::string_view, 7> kIsolated{"</s>", "<s>", "[", "]", "(", ")", ","};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

Gap classify_gap(std::string_view ws) {
  if (ws.empty()) return Gap::none;
  if (ws == " ") return Gap::space;
  if (ws == "\n") return Gap::newline;
  if (ws == "\n\n") return Gap::paragraph;
  return Gap::space;
}

std::string_view gap_text(Gap g) {
  switch (g) {
    case Gap::none:
    case Gap::synthetic: return "";
    case Gap::space: return " ";
    case Gap::newline: return "\n";
    case Gap::paragraph: return "\n\n";
  }
  return "";
}

}  // namespace

std::vector<PreToken> pretokenize(std::string_view text) {
  std::vector<PreToken> out;
  std::size_t i = 0;
  std::string current;
  Gap pending = Gap::none;
  auto flush = [&] {
    if (!current.empty()) {
      out.push_back({std::move(current), pending});
      current.clear();
      pending = Gap::none;
    }
  };
  while (i < text.size()) {
    if (is_space(text[i])) {
      flush();
      std::size_t j = i;
      while (j < text.size() && is_space(text[j])) ++j;
      pending = out.empty() ? Gap::none : classify_gap(text.substr(i, j - i));
      i = j;
      continue;
    }
    bool matched = false;
    for (auto p : kIsolated) {
      if (text.compare(i, p.size(), p) == 0) {
        flush();
        out.push_back({std::string(p), pending});
        pending = Gap::none;
        i += p.size();
        matched = true;
        break;
      }
    }
    if (!matched) current += text[i++];
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  for (auto t : kSpecialTokens) add(std::string(t));
}

void Vocabulary::add(std::string token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, int min_freq) {
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  if (min_freq < 1) throw Error("build_vocab: min_freq must be >= 1");
  std::map<std::string, long> freq;
  for (const auto& line : corpus)
    for (auto& t : pretokenize(line)) ++freq[t.text];
  std::vector<std::pair<std::string, long>> ranked;
  for (auto& [tok, n] : freq) {
    if (std::find(kSpecialTokens.begin(), kSpecialTokens.end(), tok) != kSpecialTokens.end()) continue;
    if (n >= min_freq) ranked.emplace_back(tok, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  for (auto& [tok, n] : ranked) v.add(tok);
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a64("");
  for (const auto& t : tokens_) {
    h = fnv1a64(t, h);
    h = fnv1a64("\n", h);
  }
  return h;
}

std::string Vocabulary::to_text() const {
  std::string out = "# adsorbtext-vocab v1\n# specials bos=<s> pad=<pad> eos=</s> unk=<unk> mask=<mask>\n";
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

Vocabulary Vocabulary::from_text(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> tokens;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "# adsorbtext-vocab v1") throw ParseError(source, lineno, "not a v1 vocabulary file");
      header = true;
      continue;
    }
    if (lineno == 2 && line.rfind("# specials", 0) == 0) continue;
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  if (!header) throw ParseError(source, 1, "empty vocabulary file");
  if (tokens.size() < kSpecialTokens.size()) throw ParseError(source, lineno, "missing special tokens");
  for (std::size_t i = 0; i < kSpecialTokens.size(); ++i)
    if (tokens[i] != kSpecialTokens[i]) throw ParseError(source, i + 3, "special token out of place");
  Vocabulary v;
  for (std::size_t i = kSpecialTokens.size(); i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw ParseError(source, i + 3, "duplicate token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file_atomic(path, to_text()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return from_text(read_file(path), path.string()); }

std::size_t TokenSequence::real_length() const {
  return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

TokenSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_positions) {
  if (max_positions < 2) throw Error("encode: max_positions must be >= 2");
  auto pre = pretokenize(text);
  TokenSequence seq;
  auto push = [&](int id, Gap gap) {
    seq.ids.push_back(id);
    seq.gaps.push_back(gap);
  };
  bool text_bos = !pre.empty() && pre.front().text == "<s>";
  bool text_eos = !pre.empty() && pre.back().text == "</s>" && !(pre.size() == 1 && text_bos);
  if (!text_bos) push(Vocabulary::kBos, Gap::synthetic);
  for (const auto& t : pre) push(vocab.id(t.text), t.gap);
  if (!text_eos) push(Vocabulary::kEos, Gap::synthetic);
  if (seq.ids.size() > max_positions) {
    seq.ids.resize(max_positions - 1);
    seq.gaps.resize(max_positions - 1);
    push(Vocabulary::kEos, Gap::synthetic);
  }
  seq.attention_mask.assign(seq.ids.size(), 1);
  seq.ids.resize(max_positions, Vocabulary::kPad);
  seq.gaps.resize(max_positions, Gap::synthetic);
  seq.attention_mask.resize(max_positions, 0);
  return seq;
}

std::string decode(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (!seq.attention_mask[i] || seq.gaps[i] == Gap::synthetic) continue;
    out += gap_text(seq.gaps[i]);
    out += vocab.token(seq.ids[i]);
  }
  return out;
}

WordAlignment align_words(const TokenSequence& seq, const Vocabulary& vocab) {
  WordAlignment a;
  bool open = false;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (!seq.attention_mask[i]) continue;
    int id = seq.ids[i];
    if (id == Vocabulary::kBos || id == Vocabulary::kEos) {
      a.word_of_token.push_back(-1);
      open = false;
      continue;
    }
    if (!open || seq.gaps[i] != Gap::none) {
      a.words.emplace_back();
      open = true;
    }
    a.words.back() += vocab.token(id);
    a.word_of_token.push_back(static_cast<int>(a.words.size()) - 1);
  }
  return a;
}

MaskedSequence dynamic_mask(const TokenSequence& seq, const Vocabulary& vocab, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw Error("dynamic_mask: rate must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n_regular = static_cast<int>(vocab.size()) - Vocabulary::kSpecialCount;
  MaskedSequence out{seq, {}};
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (!seq.attention_mask[i] || Vocabulary::is_special(seq.ids[i])) continue;
    if (unit(rng) >= rate) continue;
    out.labels.emplace_back(i, seq.ids[i]);
    double action = unit(rng);
    if (action < 0.8) {
      out.seq.ids[i] = Vocabulary::kMask;
    } else if (action < 0.9 && n_regular > 0) {
      out.seq.ids[i] = Vocabulary::kSpecialCount + static_cast<int>(unit(rng) * n_regular) % n_regular;
    }
  }
  return out;
}

}  // namespace adsorbtext
