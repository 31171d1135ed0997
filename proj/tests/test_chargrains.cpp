#include <doctest.h>

#include <sstream>

#include "moto/chargrains.hpp"
#include "moto/error.hpp"
#include "support.hpp"

using namespace moto;

namespace {

Dictionary dict_from(const std::string& text, Granularity kind) {
  std::istringstream in(text);
  return parse_dictionary(in, kind, "test");
}

Corpus corpus_from(const std::string& text, const CorpusOptions& options = {}) {
  std::istringstream in(text);
  return parse_corpus(in, "test", options);
}

std::array<Dictionary, 3> bundled_dictionaries() {
  const auto dir = support::data_dir();
  return {load_dictionary(dir / "dict.radical.tsv", Granularity::radical),
          load_dictionary(dir / "dict.wubi.tsv", Granularity::wubi),
          load_dictionary(dir / "dict.pinyin.tsv", Granularity::pinyin)};
}

using Tokens = std::vector<std::string>;

}  // namespace

TEST_CASE("utf8 splitting") {
  CHECK(utf8::split_chars("中a☃") == Tokens{"中", "a", "☃"});
  CHECK(utf8::split_chars("").empty());
  CHECK_THROWS_AS(utf8::split_chars("\xe4\xb8"), InputError);
  CHECK(utf8::decode_one("中") == U'中');
  CHECK(utf8::is_chinese(U'中'));
  CHECK_FALSE(utf8::is_chinese(U'a'));
  CHECK(utf8::non_chinese_ratio("中a") == 0.5);
}

TEST_CASE("dictionary lines") {
  SUBCASE("radicals") {
    const Dictionary d = dict_from("盟\t日,月,皿\n", Granularity::radical);
    REQUIRE(d.find("盟"));
    CHECK(*d.find("盟") == Tokens{"日", "月", "皿"});
  }
  SUBCASE("wubi") {
    const Dictionary d = dict_from("花\tawxb\n", Granularity::wubi);
    CHECK(*d.find("花") == Tokens{"awxb"});
  }
  SUBCASE("pinyin keeps the first pronunciation") {
    const Dictionary d = dict_from("中\tzhōng\n中\tzhòng\n", Granularity::pinyin);
    CHECK(d.size() == 1);
    CHECK(*d.find("中") == Tokens{"zhōng"});
  }
  SUBCASE("comments and blank lines") {
    const Dictionary d = dict_from("# header\n\n花\tawxb\n", Granularity::wubi);
    CHECK(d.size() == 1);
  }
}

TEST_CASE("malformed dictionary lines") {
  CHECK_THROWS_AS(dict_from("花\n", Granularity::wubi), ParseError);
  CHECK_THROWS_AS(dict_from("花草\tawxb\n", Granularity::wubi), ParseError);
  CHECK_THROWS_AS(dict_from("花\tawxb,\n", Granularity::wubi), ParseError);
  try {
    dict_from("花\tawxb\n草\n", Granularity::wubi);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("missing dictionary file names the path") {
  try {
    load_dictionary("/nonexistent/dict.tsv", Granularity::radical);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dict.tsv") != std::string::npos);
  }
}

TEST_CASE("transliterate") {
  const Dictionary d = dict_from("盟\t日,月,皿\n花\t艹,化\n", Granularity::radical);
  CHECK(transliterate("盟", d) == Tokens{"日", "月", "皿"});
  CHECK(transliterate("", d).empty());
  CHECK(transliterate("☃", d) == Tokens{std::string(kUnkToken)});
  CHECK(transliterate("花☃盟", d) == Tokens{"艹", "化", "<unk>", "日", "月", "皿"});
}

TEST_CASE("transliteration length is the sum of entry lengths") {
  const auto dicts = bundled_dictionaries();
  const Corpus c = load_corpus(support::data_dir() / "synthetic4.tsv");
  for (const auto& dict : dicts) {
    for (const auto& s : c.samples) {
      std::size_t expected = 0;
      for (const auto& ch : utf8::split_chars(s.text)) {
        const auto* entry = dict.find(ch);
        expected += entry ? entry->size() : 1;
      }
      CHECK(transliterate(s.text, dict).size() == expected);
    }
  }
}

TEST_CASE("corpus parsing") {
  SUBCASE("label and text") {
    const Corpus c = corpus_from("体育\t球队获胜\n");
    REQUIRE(c.samples.size() == 1);
    CHECK(c.samples[0].label == "体育");
    CHECK(c.samples[0].text == "球队获胜");
  }
  SUBCASE("empty input") { CHECK(corpus_from("").samples.empty()); }
  SUBCASE("empty text is skipped and counted") {
    const Corpus c = corpus_from("a\t一\nb\t二\na\t  \nc\t三\n");
    CHECK(c.samples.size() == 3);
    CHECK(c.skipped_empty == 1);
  }
  SUBCASE("label inventory in order of first appearance") {
    const Corpus c = corpus_from("乙\t一\n甲\t二\n乙\t三\n");
    CHECK(c.labels.names() == Tokens{"乙", "甲"});
  }
  SUBCASE("unknown label against a fixed inventory") {
    CorpusOptions o;
    o.labels = LabelSet({"甲"});
    CHECK_THROWS_AS(corpus_from("乙\t一\n", o), ParseError);
  }
  SUBCASE("missing tab") { CHECK_THROWS_AS(corpus_from("no tab here\n"), ParseError); }
  SUBCASE("non-Chinese filter") {
    CorpusOptions o;
    o.max_non_chinese = 0.2;
    const Corpus c = corpus_from("a\t中文文本\nb\tenglish\nc\t中文abc\n", o);
    CHECK(c.samples.size() == 1);
    CHECK(c.skipped_filtered == 2);
  }
}

TEST_CASE("corpus loading is deterministic and order preserving") {
  const auto path = support::data_dir() / "synthetic4.tsv";
  const Corpus a = load_corpus(path);
  const Corpus b = load_corpus(path);
  REQUIRE(a.samples.size() == 200);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].text == b.samples[i].text);
    CHECK(a.samples[i].label == b.samples[i].label);
  }
}

TEST_CASE("vocabulary construction") {
  SUBCASE("frequency order") {
    const std::vector<Tokens> seqs = {{"a", "b", "a"}, {"a"}};
    const Vocab v = build_vocab(seqs);
    CHECK(v.tokens() == Tokens{"<pad>", "<unk>", "a", "b"});
  }
  SUBCASE("empty input keeps the reserved tokens") {
    const Vocab v = build_vocab(std::vector<Tokens>{});
    CHECK(v.size() == 2);
    CHECK(v.id("<pad>") == kPadId);
    CHECK(v.id("<unk>") == kUnkId);
  }
  SUBCASE("ties break lexicographically") {
    const std::vector<Tokens> seqs = {{"b", "a", "b", "a"}};
    CHECK(build_vocab(seqs).tokens() == Tokens{"<pad>", "<unk>", "a", "b"});
  }
  SUBCASE("unknown tokens map to UNK") {
    const Vocab v = build_vocab(std::vector<Tokens>{{"x"}});
    CHECK(v.id("y") == kUnkId);
    CHECK_FALSE(v.find("y"));
  }
}

TEST_CASE("vocab ids round trip and persist") {
  const Corpus c = load_corpus(support::data_dir() / "synthetic4.tsv");
  const auto dicts = bundled_dictionaries();
  std::vector<Tokens> seqs;
  for (const auto& s : c.samples) seqs.push_back(transliterate(s.text, dicts[0]));
  const Vocab v = build_vocab(seqs);

  for (std::size_t id = 0; id < v.size(); ++id) CHECK(v.id(v.token(id)) == id);
  for (const auto& seq : seqs) CHECK(v.decode(v.ids(seq)) == seq);

  std::stringstream buf;
  v.save(buf);
  const Vocab back = Vocab::parse(buf, "buf");
  CHECK(back == v);
  CHECK(back.fingerprint() == v.fingerprint());

  const Vocab other = build_vocab(std::vector<Tokens>{{"x"}});
  CHECK(other.fingerprint() != v.fingerprint());
}

TEST_CASE("target length") {
  CHECK(target_length(std::vector<std::size_t>{2, 4}) == 3);
  CHECK(target_length(std::vector<std::size_t>{3}) == 3);
  CHECK(target_length(std::vector<std::size_t>{1, 2}) == 2);
  CHECK(target_length(std::vector<std::size_t>{0, 0}) == 1);
  CHECK_THROWS_AS(target_length(std::vector<std::size_t>{}), InputError);
}

TEST_CASE("featurizer pads with the transliterated pad character") {
  auto dicts = bundled_dictionaries();
  // Mean character lengths 5 and 5 give lc = 5.
  const std::vector<RawSample> training = {{"a", "花草中大小"}, {"b", "河江海湖洋"}};
  const Featurizer f = Featurizer::fit(dicts, training);
  CHECK(f.target(Granularity::character) == 5);

  const auto ids = f.encode_stream("花草中", Granularity::character);
  REQUIRE(ids.size() == 5);
  const Vocab& v = f.vocab(Granularity::character);
  // '一' never appears in training, so its id falls back to PAD.
  CHECK(ids[3] == kPadId);
  CHECK(ids[4] == kPadId);
  CHECK(v.decode(std::vector<std::size_t>(ids.begin(), ids.begin() + 3)) ==
        Tokens{"花", "草", "中"});
}

TEST_CASE("featurizer pad ids come from the vocabulary when present") {
  auto dicts = bundled_dictionaries();
  const std::vector<RawSample> training = {{"a", "一二"}, {"b", "花"}, {"b", "草"}};
  const Featurizer f = Featurizer::fit(dicts, training);
  CHECK(f.target(Granularity::character) == 2);
  const Vocab& v = f.vocab(Granularity::character);
  CHECK(f.pad_id(Granularity::character) == v.id("一"));
  const auto ids = f.encode_stream("花", Granularity::character);
  CHECK(ids == std::vector<std::size_t>{v.id("花"), v.id("一")});
}

TEST_CASE("featurizer truncates to the first tokens") {
  auto dicts = bundled_dictionaries();
  const std::vector<RawSample> training = {{"a", "花草"}, {"b", "河江"}};
  const Featurizer f = Featurizer::fit(dicts, training);
  const Vocab& v = f.vocab(Granularity::character);
  CHECK(f.encode_stream("花草河", Granularity::character) ==
        std::vector<std::size_t>{v.id("花"), v.id("草")});
  CHECK(f.encode_stream("河江", Granularity::character) ==
        std::vector<std::size_t>{v.id("河"), v.id("江")});
}

TEST_CASE("encoded samples always have their target lengths") {
  const Corpus c = load_corpus(support::data_dir() / "synthetic4.tsv");
  const Featurizer f = Featurizer::fit(bundled_dictionaries(), c.samples);
  const Corpus test = load_corpus(support::data_dir() / "synthetic4_test.tsv");
  for (const auto* set : {&c, &test}) {
    for (const auto& s : f.encode_all(set->samples, c.labels)) {
      for (Granularity g : kGranularities) {
        CHECK(s.stream(g).size() == f.target(g));
        for (std::size_t id : s.stream(g)) CHECK(id < f.vocab(g).size());
      }
    }
  }
}

TEST_CASE("radical stream of a three-radical character") {
  const std::vector<RawSample> training = {{"a", "盟"}, {"b", "花"}};
  const Featurizer f = Featurizer::fit(bundled_dictionaries(), training);
  const auto ids = f.encode_stream("盟", Granularity::radical);
  CHECK(f.vocab(Granularity::radical).decode(ids) == Tokens{"日", "月", "皿"});
}
