#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace moto {

/// The four parallel views of a text.
enum class Granularity { character = 0, radical = 1, wubi = 2, pinyin = 3 };

inline constexpr std::array<Granularity, 4> kGranularities = {
    Granularity::character, Granularity::radical, Granularity::wubi, Granularity::pinyin};

/// Short name used in file names, flags and checkpoint sections: c, r, w, py.
std::string_view short_name(Granularity g);
/// Long name: character, radical, wubi, pinyin.
std::string_view long_name(Granularity g);
/// Accepts either the short or the long name.
std::optional<Granularity> parse_granularity(std::string_view name);

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;

/// The character used to fill short texts.
inline constexpr std::string_view kPadCharacter = "一";

namespace utf8 {

/// Splits UTF-8 text into one string per Unicode scalar. Throws InputError on
/// malformed input.
std::vector<std::string> split_chars(std::string_view text);

/// Code point of a single-scalar UTF-8 string.
char32_t decode_one(std::string_view ch);

/// True for CJK unified ideographs (basic block and extension A).
bool is_chinese(char32_t cp);

/// Fraction of scalars in `text` that are not Chinese ideographs.
double non_chinese_ratio(std::string_view text);

std::string_view trim(std::string_view s);

}  // namespace utf8

/// One-to-one mapping from a character to its radical, Wubi or Pinyin tokens.
class Dictionary {
 public:
  explicit Dictionary(Granularity kind) : kind_(kind) {}

  Granularity kind() const { return kind_; }
  std::size_t size() const { return entries_.size(); }

  /// Adds an entry unless the key is already present (first occurrence wins).
  /// Returns false when the key was a duplicate.
  bool add(const std::string& character, std::vector<std::string> tokens);

  const std::vector<std::string>* find(std::string_view character) const;

 private:
  Granularity kind_;
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

/// Parses `char<TAB>tok1[,tok2...]` lines. Blank lines and lines starting with
/// '#' are ignored.
Dictionary parse_dictionary(std::istream& in, Granularity kind, const std::string& source);
Dictionary load_dictionary(const std::filesystem::path& path, Granularity kind);

/// Concatenated per-character tokens; characters missing from the dictionary
/// contribute a single kUnkToken.
std::vector<std::string> transliterate(std::string_view text, const Dictionary& dict);

struct RawSample {
  std::string label;
  std::string text;
};

/// Ordered class names; ids are positions.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::optional<std::size_t> find(std::string_view name) const;
  /// Id of `name`, appending it when absent.
  std::size_t intern(const std::string& name);

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  std::vector<std::string> names_;
};

struct Corpus {
  std::vector<RawSample> samples;
  LabelSet labels;
  /// Lines skipped because the text was empty after trimming.
  std::size_t skipped_empty = 0;
  /// Lines dropped by the non-Chinese ratio filter.
  std::size_t skipped_filtered = 0;
};

struct CorpusOptions {
  /// When set, labels must come from this inventory; otherwise the inventory
  /// is built in order of first appearance.
  std::optional<LabelSet> labels;
  /// Drop texts whose non-Chinese ratio exceeds this value.
  std::optional<double> max_non_chinese;
};

/// Parses `label<TAB>text` lines.
Corpus parse_corpus(std::istream& in, const std::string& source, const CorpusOptions& options = {});
Corpus load_corpus(const std::filesystem::path& path, const CorpusOptions& options = {});

/// Token to id mapping with kPadToken = 0 and kUnkToken = 1.
class Vocab {
 public:
  Vocab();

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }

  /// Id of `token`, or kUnkId.
  std::size_t id(std::string_view token) const;
  std::optional<std::size_t> find(std::string_view token) const;

  std::vector<std::size_t> ids(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const std::size_t> ids) const;

  /// Writes `token<TAB>id` lines, ids ascending.
  void save(std::ostream& out) const;
  static Vocab parse(std::istream& in, const std::string& source);
  static Vocab load(const std::filesystem::path& path);

  /// 64-bit FNV-1a over the token list, used to detect mismatched files.
  std::uint64_t fingerprint() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;

  friend Vocab build_vocab(std::span<const std::vector<std::string>> sequences);
};

/// Ids from 2 upward by descending frequency, ties broken lexicographically.
Vocab build_vocab(std::span<const std::vector<std::string>> sequences);

/// Per-granularity fixed sequence lengths.
using TargetLengths = std::array<std::size_t, 4>;

/// Ceiling of the mean length, at least 1. Throws InputError for no sequences.
std::size_t target_length(std::span<const std::size_t> lengths);

struct EncodedSample {
  /// Indexed by Granularity; each has exactly the configured target length.
  std::array<std::vector<std::size_t>, 4> ids;
  std::size_t class_id = 0;

  const std::vector<std::size_t>& stream(Granularity g) const {
    return ids[static_cast<std::size_t>(g)];
  }
};

/// Dictionaries, vocabularies and target lengths needed to turn raw text into
/// fixed-length id sequences.
class Featurizer {
 public:
  /// `dicts` holds the radical, Wubi and Pinyin dictionaries in that order.
  Featurizer(std::array<Dictionary, 3> dicts, std::array<Vocab, 4> vocabs, TargetLengths targets);

  /// Builds vocabularies and target lengths from the training split.
  static Featurizer fit(std::array<Dictionary, 3> dicts, std::span<const RawSample> training);

  /// Token stream of one granularity, before padding or truncation.
  std::vector<std::string> tokens(std::string_view text, Granularity g) const;

  /// Stream truncated to its target length or filled with the pad
  /// character's tokens.
  std::vector<std::size_t> encode_stream(std::string_view text, Granularity g) const;

  EncodedSample encode(const RawSample& sample, const LabelSet& labels) const;
  std::vector<EncodedSample> encode_all(std::span<const RawSample> samples,
                                        const LabelSet& labels) const;

  /// Id used to fill granularity `g`: the first token of the pad
  /// character's transliteration, or kPadId when it is not in the vocab.
  std::size_t pad_id(Granularity g) const;

  const Vocab& vocab(Granularity g) const { return vocabs_[static_cast<std::size_t>(g)]; }
  const Dictionary& dictionary(Granularity g) const;
  std::size_t target(Granularity g) const { return targets_[static_cast<std::size_t>(g)]; }
  const TargetLengths& targets() const { return targets_; }

 private:
  std::vector<std::size_t> pad_ids(Granularity g) const;

  std::array<Dictionary, 3> dicts_;
  std::array<Vocab, 4> vocabs_;
  TargetLengths targets_;
};

}  // namespace moto
