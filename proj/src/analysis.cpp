#include "adsorbtext/analysis.hpp"

#include <algorithm>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "adsorbtext/elements.hpp"

namespace adsorbtext {

std::vector<double> token_attention(const AttentionRecord& record, std::size_t layer,
                                    std::span<const std::uint8_t> mask) {
  if (record.weights.empty()) throw Error("token_attention: attention was not captured");
  if (layer >= record.weights.size())
    throw Error("token_attention: layer " + std::to_string(layer) + " out of range (" +
                std::to_string(record.weights.size()) + " layers)");
  const std::size_t L = record.length;
  const auto& heads = record.weights[layer];
  if (heads.empty()) throw Error("token_attention: no heads captured for layer " + std::to_string(layer));
  auto real = [&](std::size_t i) { return mask.empty() || (i < mask.size() && mask[i] != 0); };

  std::vector<double> head_mean(L * L, 0.0);
  for (const auto& w : heads) {
    if (w.size() != L * L) throw Error("token_attention: malformed attention matrix");
    for (std::size_t k = 0; k < w.size(); ++k) head_mean[k] += w[k];
  }
  const double inv_h = 1.0 / static_cast<double>(heads.size());
  std::size_t n_queries = 0;
  for (std::size_t i = 0; i < L; ++i) n_queries += real(i);

  std::vector<double> received(L, 0.0);
  if (n_queries == 0) return received;
  for (std::size_t i = 0; i < L; ++i) {
    if (!real(i)) continue;
    for (std::size_t j = 0; j < L; ++j)
      if (real(j)) received[j] += head_mean[i * L + j] * inv_h;
  }
  for (double& r : received) r /= static_cast<double>(n_queries);
  return received;
}

double TokenAttentionProfile::total() const {
  double t = 0.0;
  for (const auto& w : words) t += w.score;
  for (const auto& s : specials) t += s.score;
  return t;
}

TokenAttentionProfile merge_per_word(std::span<const double> scores, const WordAlignment& alignment,
                                     const TokenSequence& seq, const Vocabulary& vocab, std::size_t layer,
                                     WordMerge merge) {
  TokenAttentionProfile p;
  p.layer = layer;
  for (const auto& w : alignment.words) p.words.push_back({w, {}, 0.0});
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!seq.attention_mask.empty() && i < seq.attention_mask.size() && !seq.attention_mask[i]) continue;
    if (i >= alignment.word_of_token.size())
      throw Error("merge_per_word: token " + std::to_string(i) + " is not assigned to a word");
    int w = alignment.word_of_token[i];
    if (w < 0) {
      p.specials.push_back({i, i < seq.ids.size() ? vocab.token(seq.ids[i]) : std::string(), scores[i]});
      continue;
    }
    if (static_cast<std::size_t>(w) >= p.words.size())
      throw Error("merge_per_word: token " + std::to_string(i) + " maps to unknown word " + std::to_string(w));
    p.words[w].tokens.push_back(i);
    p.words[w].score += scores[i];
  }
  if (merge == WordMerge::mean)
    for (auto& w : p.words)
      if (!w.tokens.empty()) w.score /= static_cast<double>(w.tokens.size());
  return p;
}

std::vector<TokenAttentionProfile> attention_profiles(const EncoderModel& model, const Vocabulary& vocab,
                                                      std::string_view text, std::span<const std::size_t> layers,
                                                      WordMerge merge) {
  auto seq = encode(text, vocab, model.config().max_positions);
  auto tape = tensor::Tape::inference();
  ForwardOptions opts;
  opts.capture_attention = true;
  auto fr = forward(model, tape, seq, opts);
  auto alignment = align_words(seq, vocab);
  std::span<const std::uint8_t> mask(seq.attention_mask.data(), fr.attention->length);
  std::vector<TokenAttentionProfile> out;
  for (auto layer : layers)
    out.push_back(merge_per_word(token_attention(*fr.attention, layer, mask), alignment, seq, vocab, layer, merge));
  return out;
}

std::vector<HeatmapRow> heatmap_rows(const std::vector<TokenAttentionProfile>& profiles) {
  std::vector<HeatmapRow> rows;
  for (const auto& p : profiles) {
    double max = 0.0;
    for (const auto& w : p.words) max = std::max(max, w.score);
    for (std::size_t k = 0; k < p.words.size(); ++k) {
      const auto& w = p.words[k];
      rows.push_back({p.layer, k, w.word, w.score, max > 0.0 ? w.score / max : 0.0});
    }
  }
  return rows;
}

std::string heatmap_to_string(const std::vector<TokenAttentionProfile>& profiles) {
  std::string out;
  for (const auto& r : heatmap_rows(profiles)) {
    nlohmann::json j = {
        {"layer", r.layer}, {"position", r.position}, {"word", r.word}, {"raw", r.raw}, {"intensity", r.intensity}};
    out += j.dump() + "\n";
  }
  return out;
}

void export_heatmap(const std::filesystem::path& path, const std::vector<TokenAttentionProfile>& profiles) {
  write_file_atomic(path, heatmap_to_string(profiles));
}

std::vector<HeatmapRow> parse_heatmap(std::string_view text, const std::string& source) {
  std::vector<HeatmapRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      HeatmapRow r;
      r.layer = j.at("layer").get<std::size_t>();
      r.position = j.at("position").get<std::size_t>();
      r.word = j.at("word").get<std::string>();
      r.raw = j.at("raw").get<double>();
      r.intensity = j.at("intensity").get<double>();
      if (r.intensity < 0.0 || r.intensity > 1.0) throw ValidationError("intensity outside [0, 1]");
      rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return rows;
}

std::vector<HeatmapRow> read_heatmap(const std::filesystem::path& path) {
  return parse_heatmap(read_file(path), path.string());
}

std::string_view to_string(AdsorbateSize s) {
  switch (s) {
    case AdsorbateSize::small: return "small";
    case AdsorbateSize::medium: return "medium";
    case AdsorbateSize::large: return "large";
  }
  return "?";
}

AdsorbateSize adsorbate_size_class(std::size_t atoms) {
  if (atoms < 3) return AdsorbateSize::small;
  if (atoms > 5) return AdsorbateSize::large;
  return AdsorbateSize::medium;
}

std::size_t adsorbate_atom_count(std::string_view smiles) {
  std::size_t n = 0;
  for (const auto& [el, count] : element_counts(smiles)) n += static_cast<std::size_t>(count);
  return n;
}

namespace {

AdsorbateSize parse_size(std::string_view s) {
  if (s == "small") return AdsorbateSize::small;
  if (s == "medium") return AdsorbateSize::medium;
  if (s == "large") return AdsorbateSize::large;
  throw ValidationError("unknown size class '" + std::string(s) + "'");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

constexpr std::size_t kMetaColumns = 9;

}  // namespace

std::vector<EmbeddingRow> compute_embeddings(const EncoderModel& model, const Vocabulary& vocab,
                                             const std::vector<EmbeddingSource>& sources, unsigned threads) {
  std::vector<EmbeddingRow> rows(sources.size());
  auto work = [&](std::size_t k) {
    const auto& src = sources[k];
    auto& row = rows[k];
    row.system_id = src.system_id;
    row.split = src.split;
    row.adsorbate_smiles = src.adsorbate_smiles;
    row.bulk_formula = src.bulk_formula;
    row.adsorbate_atoms = adsorbate_atom_count(src.adsorbate_smiles);
    row.size_class = adsorbate_size_class(row.adsorbate_atoms);
    auto counts = element_counts(src.bulk_formula);
    for (std::size_t f = 0; f < kEmbeddingFlagElements.size(); ++f)
      row.bulk_has[f] = counts.count(std::string(kEmbeddingFlagElements[f])) != 0;
    auto tape = tensor::Tape::inference();
    auto fr = forward(model, tape, encode(src.text, vocab, model.config().max_positions));
    auto v = fr.pooled.values();
    row.vector.assign(v.begin(), v.end());
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, sources.size()))));
  if (threads == 1) {
    for (std::size_t k = 0; k < sources.size(); ++k) work(k);
    return rows;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < sources.size(); k += threads) work(k);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

std::string embeddings_to_string(const std::vector<EmbeddingRow>& rows) {
  std::size_t width = rows.empty() ? 0 : rows.front().vector.size();
  std::string out = "system_id\tsplit\tadsorbate\tbulk\tadsorbate_atoms\tsize_class";
  for (auto el : kEmbeddingFlagElements) out += "\thas_" + std::string(el);
  for (std::size_t d = 0; d < width; ++d) out += "\te" + std::to_string(d);
  out += '\n';
  for (const auto& r : rows) {
    if (r.vector.size() != width) throw ValidationError("embedding rows differ in width");
    out += r.system_id + '\t' + std::string(to_string(r.split)) + '\t' + r.adsorbate_smiles + '\t' + r.bulk_formula +
           '\t' + std::to_string(r.adsorbate_atoms) + '\t' + std::string(to_string(r.size_class));
    for (bool b : r.bulk_has) out += b ? "\t1" : "\t0";
    for (double x : r.vector) out += '\t' + format_real(x);
    out += '\n';
  }
  return out;
}

void export_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows) {
  write_file_atomic(path, embeddings_to_string(rows));
}

std::vector<EmbeddingRow> parse_embeddings(std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("system_id\t", 0) != 0) throw ParseError(source, 1, "missing header");
  const std::size_t columns = split_tabs(line).size();
  if (columns < kMetaColumns) throw ParseError(source, 1, "header has too few columns");
  std::vector<EmbeddingRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != columns)
      throw ParseError(source, lineno, "expected " + std::to_string(columns) + " columns, got " + std::to_string(f.size()));
    try {
      EmbeddingRow r;
      r.system_id = f[0];
      r.split = parse_split(f[1]);
      r.adsorbate_smiles = f[2];
      r.bulk_formula = f[3];
      r.adsorbate_atoms = std::stoul(f[4]);
      r.size_class = parse_size(f[5]);
      for (std::size_t k = 0; k < 3; ++k) r.bulk_has[k] = f[6 + k] == "1";
      for (std::size_t c = kMetaColumns; c < f.size(); ++c) r.vector.push_back(std::stod(f[c]));
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ParseError(source, lineno, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  return rows;
}

std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(read_file(path), path.string());
}

}  // namespace adsorbtext
