#include "moto/chargrains.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "moto/error.hpp"

namespace moto {

std::string_view short_name(Granularity g) {
  switch (g) {
    case Granularity::character: return "c";
    case Granularity::radical: return "r";
    case Granularity::wubi: return "w";
    case Granularity::pinyin: return "py";
  }
  return "?";
}

std::string_view long_name(Granularity g) {
  switch (g) {
    case Granularity::character: return "character";
    case Granularity::radical: return "radical";
    case Granularity::wubi: return "wubi";
    case Granularity::pinyin: return "pinyin";
  }
  return "?";
}

std::optional<Granularity> parse_granularity(std::string_view name) {
  for (Granularity g : kGranularities) {
    if (name == short_name(g) || name == long_name(g)) return g;
  }
  return std::nullopt;
}

namespace utf8 {

std::vector<std::string> split_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (lead < 0x80) len = 1;
    else if ((lead & 0xE0) == 0xC0) len = 2;
    else if ((lead & 0xF0) == 0xE0) len = 3;
    else if ((lead & 0xF8) == 0xF0) len = 4;
    else throw InputError("malformed UTF-8 at byte " + std::to_string(i));
    if (i + len > text.size()) throw InputError("truncated UTF-8 sequence at byte " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) {
        throw InputError("malformed UTF-8 at byte " + std::to_string(i + k));
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

char32_t decode_one(std::string_view ch) {
  if (ch.empty()) return 0;
  const auto b = [&](std::size_t k) { return static_cast<unsigned char>(ch[k]); };
  switch (ch.size()) {
    case 1: return b(0);
    case 2: return ((b(0) & 0x1F) << 6) | (b(1) & 0x3F);
    case 3: return ((b(0) & 0x0F) << 12) | ((b(1) & 0x3F) << 6) | (b(2) & 0x3F);
    default:
      return ((b(0) & 0x07) << 18) | ((b(1) & 0x3F) << 12) | ((b(2) & 0x3F) << 6) | (b(3) & 0x3F);
  }
}

bool is_chinese(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF);
}

double non_chinese_ratio(std::string_view text) {
  const auto chars = split_chars(text);
  if (chars.empty()) return 0.0;
  std::size_t other = 0;
  for (const auto& c : chars) other += is_chinese(decode_one(c)) ? 0 : 1;
  return static_cast<double>(other) / static_cast<double>(chars.size());
}

std::string_view trim(std::string_view s) {
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace utf8

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return in;
}

}  // namespace

bool Dictionary::add(const std::string& character, std::vector<std::string> tokens) {
  return entries_.emplace(character, std::move(tokens)).second;
}

const std::vector<std::string>* Dictionary::find(std::string_view character) const {
  auto it = entries_.find(std::string(character));
  return it == entries_.end() ? nullptr : &it->second;
}

Dictionary parse_dictionary(std::istream& in, Granularity kind, const std::string& source) {
  Dictionary dict(kind);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) {
      throw ParseError(source, lineno, "expected 2 tab-separated fields, got " +
                                           std::to_string(fields.size()));
    }
    std::vector<std::string> chars;
    try {
      chars = utf8::split_chars(fields[0]);
    } catch (const InputError& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (chars.size() != 1) {
      throw ParseError(source, lineno, "key must be exactly one character: '" + fields[0] + "'");
    }
    auto tokens = split(fields[1], ',');
    for (auto& t : tokens) {
      t = std::string(utf8::trim(t));
      if (t.empty()) throw ParseError(source, lineno, "empty token");
    }
    dict.add(chars.front(), std::move(tokens));
  }
  return dict;
}

Dictionary load_dictionary(const std::filesystem::path& path, Granularity kind) {
  auto in = open_input(path);
  return parse_dictionary(in, kind, path.string());
}

std::vector<std::string> transliterate(std::string_view text, const Dictionary& dict) {
  std::vector<std::string> out;
  for (const auto& ch : utf8::split_chars(text)) {
    if (const auto* tokens = dict.find(ch)) {
      out.insert(out.end(), tokens->begin(), tokens->end());
    } else {
      out.emplace_back(kUnkToken);
    }
  }
  return out;
}

LabelSet::LabelSet(std::vector<std::string> names) {
  for (auto& n : names) intern(n);
}

std::optional<std::size_t> LabelSet::find(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t LabelSet::intern(const std::string& name) {
  if (auto id = find(name)) return *id;
  names_.push_back(name);
  return names_.size() - 1;
}

Corpus parse_corpus(std::istream& in, const std::string& source, const CorpusOptions& options) {
  Corpus corpus;
  if (options.labels) corpus.labels = *options.labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      if (utf8::trim(line).empty()) {
        ++corpus.skipped_empty;
        continue;
      }
      throw ParseError(source, lineno, "expected label<TAB>text");
    }
    std::string label(utf8::trim(std::string_view(line).substr(0, tab)));
    std::string text(utf8::trim(std::string_view(line).substr(tab + 1)));
    if (label.empty()) throw ParseError(source, lineno, "empty label");
    try {
      utf8::split_chars(text);
    } catch (const InputError& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (text.empty()) {
      ++corpus.skipped_empty;
      continue;
    }
    if (options.max_non_chinese && utf8::non_chinese_ratio(text) > *options.max_non_chinese) {
      ++corpus.skipped_filtered;
      continue;
    }
    if (options.labels) {
      if (!corpus.labels.find(label)) {
        throw ParseError(source, lineno, "unknown label '" + label + "'");
      }
    } else {
      corpus.labels.intern(label);
    }
    corpus.samples.push_back(RawSample{std::move(label), std::move(text)});
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const CorpusOptions& options) {
  auto in = open_input(path);
  return parse_corpus(in, path.string(), options);
}

Vocab::Vocab() {
  push(std::string(kPadToken));
  push(std::string(kUnkToken));
}

void Vocab::push(std::string token) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

std::size_t Vocab::id(std::string_view token) const { return find(token).value_or(kUnkId); }

std::optional<std::size_t> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Vocab::ids(std::span<const std::string> tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocab::decode(std::span<const std::size_t> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(token(i));
  return out;
}

void Vocab::save(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocab Vocab::parse(std::istream& in, const std::string& source) {
  Vocab v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t tab = line.rfind('\t');
    if (tab == std::string::npos) throw ParseError(source, lineno, "expected token<TAB>id");
    const std::string token = line.substr(0, tab);
    std::size_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoull(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(source, lineno, "bad id");
    }
    if (id < 2) {
      if (token != v.tokens_[id]) throw ParseError(source, lineno, "reserved id mismatch");
      continue;
    }
    if (id != v.tokens_.size()) throw ParseError(source, lineno, "ids must be dense and ascending");
    if (v.index_.contains(token)) throw ParseError(source, lineno, "duplicate token");
    v.push(token);
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse(in, path.string());
}

std::uint64_t Vocab::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xFF;  // separator
    h *= 1099511628211ULL;
  }
  return h;
}

Vocab build_vocab(std::span<const std::vector<std::string>> sequences) {
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : sequences)
    for (const auto& t : seq) {
      if (t == kPadToken || t == kUnkToken) continue;
      ++counts[t];
    }
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [token, _] : ordered) v.push(token);
  return v;
}

std::size_t target_length(std::span<const std::size_t> lengths) {
  if (lengths.empty()) throw InputError("cannot derive a target length from an empty corpus");
  std::size_t total = 0;
  for (std::size_t l : lengths) total += l;
  const std::size_t n = lengths.size();
  return std::max<std::size_t>(1, (total + n - 1) / n);
}

Featurizer::Featurizer(std::array<Dictionary, 3> dicts, std::array<Vocab, 4> vocabs,
                       TargetLengths targets)
    : dicts_(std::move(dicts)), vocabs_(std::move(vocabs)), targets_(targets) {
  for (std::size_t k = 0; k < 3; ++k) {
    if (dicts_[k].kind() != kGranularities[k + 1]) {
      throw InputError("dictionary " + std::to_string(k) + " should be " +
                       std::string(long_name(kGranularities[k + 1])));
    }
  }
  for (std::size_t t : targets_) {
    if (t == 0) throw InputError("target lengths must be positive");
  }
}

Featurizer Featurizer::fit(std::array<Dictionary, 3> dicts, std::span<const RawSample> training) {
  if (training.empty()) throw InputError("empty training corpus");
  Featurizer f(std::move(dicts), {}, {1, 1, 1, 1});
  for (Granularity g : kGranularities) {
    std::vector<std::vector<std::string>> seqs;
    std::vector<std::size_t> lengths;
    seqs.reserve(training.size());
    for (const auto& s : training) {
      seqs.push_back(f.tokens(s.text, g));
      lengths.push_back(seqs.back().size());
    }
    const auto k = static_cast<std::size_t>(g);
    f.vocabs_[k] = build_vocab(seqs);
    f.targets_[k] = target_length(lengths);
  }
  return f;
}

const Dictionary& Featurizer::dictionary(Granularity g) const {
  if (g == Granularity::character) throw InputError("the character stream has no dictionary");
  return dicts_[static_cast<std::size_t>(g) - 1];
}

std::vector<std::string> Featurizer::tokens(std::string_view text, Granularity g) const {
  if (g == Granularity::character) return utf8::split_chars(text);
  return transliterate(text, dictionary(g));
}

std::vector<std::size_t> Featurizer::pad_ids(Granularity g) const {
  std::vector<std::size_t> out;
  for (const auto& t : tokens(kPadCharacter, g)) out.push_back(vocab(g).find(t).value_or(kPadId));
  return out;
}

std::size_t Featurizer::pad_id(Granularity g) const { return pad_ids(g).front(); }

std::vector<std::size_t> Featurizer::encode_stream(std::string_view text, Granularity g) const {
  const auto toks = tokens(text, g);
  std::vector<std::size_t> ids = vocab(g).ids(toks);
  const std::size_t target = this->target(g);
  if (ids.size() > target) {
    ids.resize(target);
  } else if (ids.size() < target) {
    const auto fill = pad_ids(g);
    for (std::size_t k = 0; ids.size() < target; ++k) ids.push_back(fill[k % fill.size()]);
  }
  return ids;
}

EncodedSample Featurizer::encode(const RawSample& sample, const LabelSet& labels) const {
  EncodedSample out;
  const auto cls = labels.find(sample.label);
  if (!cls) throw InputError("unknown label '" + sample.label + "'");
  out.class_id = *cls;
  for (Granularity g : kGranularities) {
    out.ids[static_cast<std::size_t>(g)] = encode_stream(sample.text, g);
  }
  return out;
}

std::vector<EncodedSample> Featurizer::encode_all(std::span<const RawSample> samples,
                                                  const LabelSet& labels) const {
  std::vector<EncodedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode(s, labels));
  return out;
}

}  // namespace moto
