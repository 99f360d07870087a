#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "adsorbtext/encoder.hpp"
#include "adsorbtext/systems.hpp"
#include "adsorbtext/tokenizer.hpp"

namespace adsorbtext {

/// Received attention per position: the head-averaged matrix is averaged over
/// query rows. Positions whose mask entry is 0 are excluded as queries and
/// score 0. An empty mask treats all `record.length` positions as real.
/// Throws Error when the record holds no weights or layer is out of range.
std::vector<double> token_attention(const AttentionRecord& record, std::size_t layer,
                                    std::span<const std::uint8_t> attention_mask = {});

enum class WordMerge { sum, mean };

struct WordScore {
  std::string word;
  std::vector<std::size_t> tokens;
  double score = 0.0;
};

struct SpecialScore {
  std::size_t position = 0;
  std::string token;
  double score = 0.0;
};

struct TokenAttentionProfile {
  std::size_t layer = 0;
  std::vector<WordScore> words;
  std::vector<SpecialScore> specials;

  double total() const;
};

/// Throws Error when a scored position has no alignment entry.
TokenAttentionProfile merge_per_word(std::span<const double> scores, const WordAlignment& alignment,
                                     const TokenSequence& seq, const Vocabulary& vocab, std::size_t layer,
                                     WordMerge merge = WordMerge::sum);

/// Encodes `text`, runs a capturing forward pass and builds one profile per requested layer.
std::vector<TokenAttentionProfile> attention_profiles(const EncoderModel& model, const Vocabulary& vocab,
                                                      std::string_view text, std::span<const std::size_t> layers,
                                                      WordMerge merge = WordMerge::sum);

struct HeatmapRow {
  std::size_t layer = 0;
  std::size_t position = 0;  // word index
  std::string word;
  double raw = 0.0;
  double intensity = 0.0;  // raw / max raw of the layer
};

std::vector<HeatmapRow> heatmap_rows(const std::vector<TokenAttentionProfile>& profiles);
std::string heatmap_to_string(const std::vector<TokenAttentionProfile>& profiles);
void export_heatmap(const std::filesystem::path& path, const std::vector<TokenAttentionProfile>& profiles);
std::vector<HeatmapRow> parse_heatmap(std::string_view text, const std::string& source = "<memory>");
std::vector<HeatmapRow> read_heatmap(const std::filesystem::path& path);

enum class AdsorbateSize { small, medium, large };
std::string_view to_string(AdsorbateSize s);
/// Fewer than 3 atoms small, more than 5 large.
AdsorbateSize adsorbate_size_class(std::size_t atoms);
/// Atom count implied by an adsorbate formula-like SMILES (e.g. "*OCH3" -> 5).
std::size_t adsorbate_atom_count(std::string_view smiles);

inline constexpr std::array<std::string_view, 3> kEmbeddingFlagElements{"Zr", "Al", "Ni"};

struct EmbeddingSource {
  std::string system_id;
  Split split = Split::train;
  std::string adsorbate_smiles;
  std::string bulk_formula;
  std::string text;
};

struct EmbeddingRow {
  std::string system_id;
  Split split = Split::train;
  std::string adsorbate_smiles;
  std::string bulk_formula;
  std::size_t adsorbate_atoms = 0;
  AdsorbateSize size_class = AdsorbateSize::small;
  std::array<bool, 3> bulk_has{};  // kEmbeddingFlagElements
  std::vector<double> vector;

  bool operator==(const EmbeddingRow&) const = default;
};

/// First-token final-layer vectors, one row per source, in input order.
std::vector<EmbeddingRow> compute_embeddings(const EncoderModel& model, const Vocabulary& vocab,
                                             const std::vector<EmbeddingSource>& sources, unsigned threads = 1);
std::string embeddings_to_string(const std::vector<EmbeddingRow>& rows);
void export_embeddings(const std::filesystem::path& path, const std::vector<EmbeddingRow>& rows);
std::vector<EmbeddingRow> parse_embeddings(std::string_view text, const std::string& source = "<memory>");
std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path);

}  // namespace adsorbtext
