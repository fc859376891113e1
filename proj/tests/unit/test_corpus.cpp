#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "test_support.hpp"
#include "weaklab/corpus.hpp"
#include "weaklab/error.hpp"

using namespace weaklab;
using weaklab::testing::TempDir;
using weaklab::testing::write_file;

namespace {

LabelSchema sentiment() { return LabelSchema("sentiment", {"positive", "negative"}); }

Dataset parse(const std::string& text, const LabelSchema& schema = sentiment()) {
  std::istringstream in(text);
  return parse_dataset(in, schema, "mem");
}

}  // namespace

TEST(LabelSchema, IndicesFollowDeclarationOrder) {
  LabelSchema s("disfluency", {"fluent", "disfluent"});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s.at(0).name, "fluent");
  EXPECT_EQ(s.at(1).index, 1u);
  EXPECT_EQ(s.index_of("disfluent"), 1u);
  EXPECT_FALSE(s.find("angry").has_value());
  EXPECT_THROW(s.index_of("angry"), ValidationError);
}

TEST(LabelSchema, RejectsFewerThanTwoOrDuplicateClasses) {
  EXPECT_THROW(LabelSchema("t", {"only"}), ValidationError);
  EXPECT_THROW(LabelSchema("t", {"a", "a"}), ValidationError);
  EXPECT_THROW(LabelSchema("t", {"a", ""}), ValidationError);
}

TEST(LabelSchema, ParsesJson) {
  auto s = parse_schema(R"({"task_name": "emotion", "classes": ["positive", "negative"]})");
  EXPECT_EQ(s.task_name(), "emotion");
  EXPECT_EQ(s.name(1), "negative");
  EXPECT_THROW(parse_schema(R"({"classes": ["a", "b"]})"), ParseError);
  EXPECT_THROW(parse_schema("{not json"), ParseError);
}

TEST(LoadDataset, PreservesFileOrder) {
  auto d = parse(R"({"id": "u1", "text": "I am happy."}
{"id": "u2", "text": "so sad", "gold": "negative"}
)");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].id, "u1");
  EXPECT_EQ(d[1].id, "u2");
  EXPECT_FALSE(d[0].gold.has_value());
  EXPECT_EQ(d[1].gold, 1u);
}

TEST(LoadDataset, DuplicateIdNamesTheId) {
  try {
    parse(R"({"id": "u1", "text": "a"}
{"id": "u1", "text": "b"})");
    FAIL() << "expected a duplicate-id error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("'u1'"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, UnknownGoldLabelIsRejected) {
  try {
    parse(R"({"id": "u1", "text": "yay", "gold": "joyful"})");
    FAIL() << "expected an unknown-label error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("joyful"), std::string::npos);
  }
}

TEST(LoadDataset, MalformedLineReportsLineNumber) {
  try {
    parse("{\"id\": \"u1\", \"text\": \"fine\"}\n\n{\"id\": \"u2\", \"text\": \n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse(R"({"id": 5, "text": "x"})"), ParseError);
  EXPECT_THROW(parse(R"({"id": "u", "text": "   "})"), ValidationError);
}

TEST(LoadDataset, SerializeRoundTripsCanonicalInput) {
  const std::string text =
      "{\"id\":\"a\",\"text\":\"I am happy.\",\"gold\":\"positive\"}\n"
      "{\"id\":\"b\",\"text\":\"caf\xC3\xA9 \\\"quoted\\\"\"}\n"
      "{\"id\":\"c\",\"text\":\"meh\",\"gold\":\"negative\"}\n";
  EXPECT_EQ(serialize_dataset(parse(text)), text);
  // CRLF input round-trips modulo line endings.
  std::string crlf = text;
  for (std::size_t pos = 0; (pos = crlf.find('\n', pos)) != std::string::npos; pos += 2) crlf.insert(pos, "\r");
  EXPECT_EQ(serialize_dataset(parse(crlf)), text);
}

TEST(LoadDataset, ReadsFromDisk) {
  TempDir dir;
  write_file(dir / "d.jsonl", "{\"id\": \"x\", \"text\": \"hello\"}\n");
  EXPECT_EQ(load_dataset(dir / "d.jsonl", sentiment()).size(), 1u);
  EXPECT_THROW(load_dataset(dir / "missing.jsonl", sentiment()), ValidationError);
}

TEST(NormalizeText, Examples) {
  EXPECT_EQ(normalize_text("I am Happy."), (TokenSequence{"i", "am", "happy"}));
  EXPECT_EQ(normalize_text(""), TokenSequence{});
  EXPECT_EQ(normalize_text("You know, uh-- don't"), (TokenSequence{"you", "know", "uh", "don't"}));
  EXPECT_EQ(normalize_text("  well-known  ... (yes)!  "), (TokenSequence{"well-known", "yes"}));
}

TEST(NormalizeText, IdempotentAndLowercaseOnRandomInput) {
  const std::string alphabet = "aBcD' -.,!?\t\nxYz";
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    std::size_t len = rng() % 40;
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
    auto tokens = normalize_text(s);
    std::string joined;
    for (const auto& t : tokens) {
      ASSERT_FALSE(t.empty());
      for (char c : t) ASSERT_FALSE(c >= 'A' && c <= 'Z') << t;
      joined += (joined.empty() ? "" : " ") + t;
    }
    EXPECT_EQ(normalize_text(joined), tokens) << "input: " << s;
  }
}

TEST(LoadLexicon, TwoEntries) {
  std::istringstream in("good\t3\nbad\t-3\n");
  auto lex = parse_lexicon(in);
  EXPECT_EQ(lex.size(), 2u);
  EXPECT_EQ(lex.score("good"), 3.0);
  EXPECT_EQ(lex.score("bad"), -3.0);
  EXPECT_FALSE(lex.score("meh").has_value());
}

TEST(LoadLexicon, NonNumericScoreIsParseErrorAtLine) {
  std::istringstream in("good\tx\n");
  try {
    parse_lexicon(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  std::istringstream trailing("good\t3abc\n");
  EXPECT_THROW(parse_lexicon(trailing), ParseError);
  std::istringstream empty_token("\t3\n");
  EXPECT_THROW(parse_lexicon(empty_token), ParseError);
  std::istringstream spaced("not good\t3\n");
  EXPECT_THROW(parse_lexicon(spaced), ParseError);
}

TEST(LoadLexicon, LaterDuplicateWinsWithWarning) {
  std::istringstream in("# comment\ngood\t3\n\ngood\t2\n");
  std::vector<std::string> warnings;
  auto lex = parse_lexicon(in, "lex", &warnings);
  EXPECT_EQ(lex.score("good"), 2.0);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("good"), std::string::npos);
}

TEST(Lexicon, LowercasesAndNegates) {
  Lexicon lex;
  EXPECT_FALSE(lex.set("GREAT", 3.0));
  EXPECT_TRUE(lex.set("great", 2.0));
  EXPECT_EQ(lex.score("great"), 2.0);
  EXPECT_EQ(lex.negated().score("great"), -2.0);
  EXPECT_THROW(lex.set("x", std::nan("")), ValidationError);
}
