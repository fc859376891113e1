#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include "test_support.hpp"
#include "weaklab/backend.hpp"
#include "weaklab/error.hpp"
#include "weaklab/prompt_sources.hpp"

using namespace weaklab;

namespace {

LabelSchema sentiment() { return LabelSchema("sentiment", {"positive", "negative"}); }
LabelSchema disfluency() { return LabelSchema("disfluency", {"fluent", "disfluent"}); }

PromptTemplate sentiment_template(PromptStyle style, const std::string& pattern = "The sentiment of the speaker is {mask}.") {
  return PromptTemplate("t", style, pattern, {{"positive", "positive"}, {"negative", "negative"}}, sentiment());
}

// Returns canned scores keyed by hypothesis text or verbalizer, or throws.
class ScriptedBackend final : public LMBackend {
 public:
  std::map<std::string, double> entail_scores;
  std::map<std::string, double> log_probs;
  std::function<void(const std::string&)> before;  // may throw
  mutable std::vector<std::string> mask_texts;

  BackendCapabilities capabilities() const override { return {true, true}; }
  std::string mask_marker() const override { return "<MASK>"; }
  std::vector<double> entail(const EntailmentQuery& q) const override {
    std::vector<double> out;
    for (const auto& h : q.hypotheses) {
      if (before) before(h);
      out.push_back(entail_scores.at(h));
    }
    return out;
  }
  std::vector<double> mask_fill(const MaskFillQuery& q) const override {
    mask_texts.push_back(q.text);
    std::vector<double> out;
    for (const auto& c : q.candidates) {
      if (before) before(c);
      out.push_back(log_probs.at(c));
    }
    return out;
  }
};

double sum(const ClassDistribution& d) {
  double s = 0;
  for (double v : d) s += v;
  return s;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

MockSpec mock_spec() {
  return parse_mock_spec(R"({"classes": ["positive", "negative"],
    "keywords": {"happy": {"positive": 2}, "awful": {"negative": 2.5}},
    "verbalizers": {"positive": "positive", "negative": "negative", "good": "positive", "bad": "negative"}})");
}

}  // namespace

TEST(PromptTemplate, Validation) {
  auto s = sentiment();
  std::map<std::string, std::string> verb = {{"positive", "good"}, {"negative", "bad"}};
  EXPECT_NO_THROW(PromptTemplate("a", PromptStyle::kNli, "It was {mask}.", verb, s));
  EXPECT_THROW(PromptTemplate("a", PromptStyle::kNli, "It was.", verb, s), ValidationError);
  EXPECT_THROW(PromptTemplate("a", PromptStyle::kNli, "{mask} and {mask}", verb, s), ValidationError);
  EXPECT_THROW(PromptTemplate("a", PromptStyle::kNli, "It was {mask}.", {{"positive", "good"}}, s), ValidationError);
  EXPECT_THROW(PromptTemplate("a", PromptStyle::kNli, "It was {mask}.", {{"positive", "x"}, {"negative", "x"}}, s),
               ValidationError);
  EXPECT_THROW(PromptTemplate("a", PromptStyle::kNli, "It was {mask}.",
                              {{"positive", "good"}, {"negative", "bad"}, {"joyful", "yay"}}, s),
               ValidationError);
  EXPECT_THROW(PromptTemplate("a", PromptStyle::kNli, "It was {mask}.", {{"positive", "very good"}, {"negative", "bad"}}, s),
               ValidationError);
}

TEST(PromptSpec, ParsesStyleAndDemos) {
  auto spec = parse_prompt_spec(R"({"id": "p", "style": "cloze", "pattern": "{text} It was {mask}.",
      "verbalizers": {"positive": "good", "negative": "bad"},
      "demos": {"negative": "awful day", "positive": "lovely day"}})",
                                sentiment());
  EXPECT_EQ(spec.prompt.style(), PromptStyle::kCloze);
  EXPECT_TRUE(spec.prompt.has_text_slot());
  ASSERT_EQ(spec.demos.size(), 2u);
  EXPECT_EQ(spec.demos[0].label, 0u);
  EXPECT_EQ(spec.demos[0].text, "lovely day");
  EXPECT_THROW(parse_prompt_spec(R"({"id": "p", "style": "mlm", "pattern": "{mask}", "verbalizers": {}})", sentiment()),
               ParseError);
  EXPECT_THROW(parse_prompt_spec("{not json", sentiment()), ParseError);
}

TEST(RenderNli, SubstitutesVerbalizerPerClassInSchemaOrder) {
  auto h = render_nli_hypotheses(sentiment_template(PromptStyle::kNli, "The sentiment of the speaker is {mask}"),
                                 sentiment());
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].first, 0u);
  EXPECT_EQ(h[0].second, "The sentiment of the speaker is positive");
  EXPECT_EQ(h[1].second, "The sentiment of the speaker is negative");

  PromptTemplate pause("d", PromptStyle::kNli, "The speaker {mask} takes a pause while speaking!",
                       {{"fluent", "never"}, {"disfluent", "often"}}, disfluency());
  auto d = render_nli_hypotheses(pause, disfluency());
  EXPECT_EQ(d[0].second, "The speaker never takes a pause while speaking!");
  EXPECT_EQ(d[1].second, "The speaker often takes a pause while speaking!");
}

TEST(RenderNli, DropsTextSlot) {
  auto h = render_nli_hypotheses(sentiment_template(PromptStyle::kNli, "{text} It was {mask}."), sentiment());
  EXPECT_EQ(h[0].second.find("{text}"), std::string::npos);
  EXPECT_NE(h[0].second.find("It was positive."), std::string::npos);
}

TEST(NliLabel, RenormalizesAndBreaksTiesBySchemaOrder) {
  auto t = sentiment_template(PromptStyle::kNli);
  Utterance u{"u", "hello", std::nullopt};
  ScriptedBackend b;
  const std::string pos = "The sentiment of the speaker is positive.";
  const std::string neg = "The sentiment of the speaker is negative.";

  b.entail_scores = {{pos, 0.9}, {neg, 0.1}};
  auto v = nli_label(u, t, b);
  EXPECT_EQ(v.label, 0u);
  EXPECT_NEAR(v.confidence, 0.9, 1e-12);

  b.entail_scores = {{pos, 0.5}, {neg, 0.5}};
  v = nli_label(u, t, b);
  EXPECT_EQ(v.label, 0u);
  EXPECT_NEAR(v.confidence, 0.5, 1e-12);

  b.entail_scores = {{pos, 0.2}, {neg, 0.6}};
  v = nli_label(u, t, b);
  EXPECT_EQ(v.label, 1u);
  EXPECT_NEAR(v.confidence, 0.75, 1e-12);
  EXPECT_EQ(v.source_id, "t");
}

TEST(NliLabel, RejectsOutOfRangeScores) {
  auto t = sentiment_template(PromptStyle::kNli);
  ScriptedBackend b;
  b.entail_scores = {{"The sentiment of the speaker is positive.", 1.5},
                     {"The sentiment of the speaker is negative.", 0.1}};
  EXPECT_THROW(nli_label({"u", "x", std::nullopt}, t, b), BackendError);
}

TEST(RenderCloze, ZeroDemoMode) {
  auto t = sentiment_template(PromptStyle::kCloze, "{text} The sentiment of the speaker is {mask}.");
  auto text = render_cloze(t, {"u", "I am happy.", std::nullopt}, {}, sentiment(), "<MASK>");
  EXPECT_EQ(text, "I am happy. The sentiment of the speaker is <MASK>.");
}

TEST(RenderCloze, DemosAppendedInSchemaOrder) {
  auto t = sentiment_template(PromptStyle::kCloze, "{text} The sentiment of the speaker is {mask}.");
  std::vector<Demonstration> demos = {{1, "What a mess."}, {0, "Lovely."}};
  auto text = render_cloze(t, {"u", "I am happy.", std::nullopt}, demos, sentiment(), "<MASK>");
  EXPECT_EQ(count(text, "<MASK>"), 1u);
  EXPECT_EQ(text,
            "I am happy. The sentiment of the speaker is <MASK>. "
            "Lovely. The sentiment of the speaker is positive. "
            "What a mess. The sentiment of the speaker is negative.");
  EXPECT_LT(text.find("positive"), text.find("negative"));
}

TEST(RenderCloze, MissingOrDuplicateDemoNamesClass) {
  auto t = sentiment_template(PromptStyle::kCloze, "{text} It is {mask}.");
  Utterance u{"u", "x", std::nullopt};
  try {
    render_cloze(t, u, {{0, "a"}}, sentiment(), "<MASK>");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("negative"), std::string::npos) << e.what();
  }
  EXPECT_THROW(render_cloze(t, u, {{0, "a"}, {0, "b"}}, sentiment(), "<MASK>"), ValidationError);
}

TEST(ClozeLabel, SoftmaxOverVerbalizers) {
  auto t = sentiment_template(PromptStyle::kCloze, "{text} It is {mask}.");
  Utterance u{"u", "x", std::nullopt};
  ScriptedBackend b;
  b.log_probs = {{"positive", -1.0}, {"negative", -3.0}};
  auto v = cloze_label(u, t, {}, b);
  EXPECT_EQ(v.label, 0u);
  EXPECT_NEAR(v.confidence, std::exp(-1.0) / (std::exp(-1.0) + std::exp(-3.0)), 1e-12);
  EXPECT_NEAR(v.confidence, 0.881, 5e-4);

  b.log_probs = {{"positive", -2.0}, {"negative", -2.0}};
  v = cloze_label(u, t, {}, b);
  EXPECT_EQ(v.label, 0u);
  EXPECT_NEAR(v.confidence, 0.5, 1e-12);

  LabelSchema emo("emotion", {"happy", "sad", "angry"});
  PromptTemplate t3("e", PromptStyle::kCloze, "{text} I feel {mask}.", {{"happy", "happy"}, {"sad", "sad"}, {"angry", "angry"}},
                    emo);
  b.log_probs = {{"happy", -2.0}, {"sad", -2.0}, {"angry", -2.0}};
  v = cloze_label(u, t3, {}, b);
  EXPECT_EQ(v.label, 0u);
  EXPECT_NEAR(v.confidence, 1.0 / 3.0, 1e-12);
}

TEST(ClozeLabel, LargeLogProbsStayFinite) {
  auto t = sentiment_template(PromptStyle::kCloze, "{text} It is {mask}.");
  ScriptedBackend b;
  b.log_probs = {{"positive", -1000.0}, {"negative", -1001.0}};
  auto d = cloze_distribution({"u", "x", std::nullopt}, t, {}, b);
  EXPECT_NEAR(sum(d), 1.0, 1e-12);
  EXPECT_NEAR(d[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(ClozeLabel, UnknownVerbalizerIsPermanentAndNamed) {
  MockBackend mock(mock_spec());
  PromptTemplate t("t", PromptStyle::kCloze, "{text} It is {mask}.", {{"positive", "great"}, {"negative", "bad"}},
                   sentiment());
  try {
    cloze_label({"u", "x", std::nullopt}, t, {}, mock);
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_FALSE(e.transient());
    EXPECT_NE(std::string(e.what()).find("great"), std::string::npos);
  }
}

TEST(Ensemble, MeanOfMemberDistributions) {
  ScriptedBackend b;
  auto a = sentiment_template(PromptStyle::kNli, "A {mask}");
  auto c = sentiment_template(PromptStyle::kNli, "C {mask}");
  b.entail_scores = {{"A positive", 0.8}, {"A negative", 0.2}, {"C positive", 0.4}, {"C negative", 0.6}};
  Utterance u{"u", "x", std::nullopt};

  auto single = ensemble_prompt_label("s", u, {{a, {}}}, b);
  auto direct = nli_label(u, a, b);
  EXPECT_EQ(single.label, direct.label);
  EXPECT_DOUBLE_EQ(single.confidence, direct.confidence);

  auto v = ensemble_prompt_label("s", u, {{a, {}}, {c, {}}}, b);
  EXPECT_EQ(v.label, 0u);
  EXPECT_NEAR(v.confidence, 0.6, 1e-12);
  EXPECT_EQ(v.source_id, "s");
}

TEST(Ensemble, TransientFailuresSkippedPermanentRethrown) {
  ScriptedBackend b;
  auto a = sentiment_template(PromptStyle::kNli, "A {mask}");
  auto c = sentiment_template(PromptStyle::kNli, "C {mask}");
  b.entail_scores = {{"A positive", 0.8}, {"A negative", 0.2}, {"C positive", 0.4}, {"C negative", 0.6}};
  Utterance u{"u", "x", std::nullopt};

  b.before = [](const std::string& h) {
    if (h.starts_with("C")) throw BackendError("timeout", true);
  };
  auto v = ensemble_prompt_label("s", u, {{a, {}}, {c, {}}}, b);
  EXPECT_EQ(v.label, 0u);
  EXPECT_NEAR(v.confidence, 0.8, 1e-12);
  EXPECT_NE(v.note.find("transient"), std::string::npos);

  b.before = [](const std::string&) { throw BackendError("timeout", true); };
  v = ensemble_prompt_label("s", u, {{a, {}}, {c, {}}}, b);
  EXPECT_TRUE(v.abstained());
  EXPECT_EQ(v.confidence, 0.0);

  b.before = [](const std::string& h) {
    if (h.starts_with("C")) throw BackendError("bad request", false);
  };
  EXPECT_THROW(ensemble_prompt_label("s", u, {{a, {}}, {c, {}}}, b), BackendError);
}

TEST(MockBackend, Examples) {
  MockBackend mock(mock_spec());
  auto scores = mock.entail({"I am happy", {"It is positive", "It is negative"}});
  EXPECT_GT(scores[0], scores[1]);
  auto flat = mock.entail({"the weather", {"It is positive", "It is negative"}});
  EXPECT_DOUBLE_EQ(flat[0], flat[1]);

  auto spec = parse_mock_spec(R"({"classes": ["fluent", "disfluent"], "keywords": {"uh": {"disfluent": 3}},
      "verbalizers": {"never": "fluent", "often": "disfluent"}})");
  MockBackend disfl(spec, "<MASK>");
  auto lp = disfl.mask_fill({"i uh went home. The speaker <MASK> pauses.", {"never", "often"}});
  EXPECT_NEAR(lp[1] - lp[0], 3.0, 1e-12);
  // Text after the mask (demonstrations) does not count.
  auto lp2 = disfl.mask_fill({"i went home. The speaker <MASK> pauses. uh uh", {"never", "often"}});
  EXPECT_DOUBLE_EQ(lp2[0], lp2[1]);
  EXPECT_THROW(disfl.mask_fill({"no marker", {"never"}}), BackendError);
  EXPECT_THROW(parse_mock_spec(R"({"classes": ["a", "b"], "keywords": {"x": {"c": 1}}})"), ParseError);
}

TEST(PromptLabels, DistributionsSumToOneAndRenamingKeepsArgmax) {
  // "good"/"bad" are alternate verbalizers for the same classes in the mock.
  MockBackend mock(mock_spec());
  auto s = sentiment();
  const std::vector<std::string> texts = {"i am happy", "awful awful", "happy but awful", "nothing here",
                                          "happy happy awful", ""};
  for (auto style : {PromptStyle::kNli, PromptStyle::kCloze}) {
    PromptTemplate a("a", style, "{text} It was {mask}.", {{"positive", "positive"}, {"negative", "negative"}}, s);
    PromptTemplate b("b", style, "{text} It was {mask}.", {{"positive", "good"}, {"negative", "bad"}}, s);
    for (const auto& text : texts) {
      if (text.empty()) continue;
      Utterance u{"u", text, std::nullopt};
      auto da = style == PromptStyle::kNli ? nli_distribution(u, a, mock) : cloze_distribution(u, a, {}, mock);
      auto db = style == PromptStyle::kNli ? nli_distribution(u, b, mock) : cloze_distribution(u, b, {}, mock);
      EXPECT_NEAR(sum(da), 1.0, 1e-9);
      EXPECT_NEAR(sum(db), 1.0, 1e-9);
      EXPECT_EQ(argmax(da), argmax(db)) << text;
      auto v = vote_from_distribution("a", da);
      EXPECT_GT(v.confidence, 0.0);
      EXPECT_LE(v.confidence, 1.0);
    }
  }
}

TEST(PromptSource, WrapsEnsemble) {
  auto mock = std::make_shared<MockBackend>(mock_spec());
  PromptSource src("p", {{sentiment_template(PromptStyle::kNli), {}}}, mock);
  auto v = src.label({"u", "so happy", std::nullopt});
  EXPECT_EQ(v.source_id, "p");
  EXPECT_EQ(v.label, 0u);
  EXPECT_THROW(PromptSource("p", {}, mock), ValidationError);
  EXPECT_THROW(PromptSource("p", {{sentiment_template(PromptStyle::kNli), {}}}, nullptr), ValidationError);
}

namespace {

// Serves a backend over HTTP on an ephemeral port; the first `fail_first`
// requests get a retryable 503.
class TestServer {
 public:
  TestServer(std::shared_ptr<const LMBackend> backend, int fail_first) : backend_(std::move(backend)) {
    failures_left_ = fail_first;
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      if (failures_left_-- > 0) {
        res.status = 503;
        res.set_content(R"({"error": "warming up", "retryable": true})", "application/json");
        return;
      }
      auto out = handle_backend_request(*backend_, req.path, req.body);
      res.status = out.status;
      res.set_content(out.body, "application/json");
    };
    server_.Post("/v1/entail", handler);
    server_.Post("/v1/mask_fill", handler);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int requests() const { return requests_; }

 private:
  std::shared_ptr<const LMBackend> backend_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> failures_left_{0};
  std::atomic<int> requests_{0};
};

RemoteBackendConfig remote_config(const std::string& endpoint) {
  RemoteBackendConfig cfg;
  cfg.endpoint = endpoint;
  cfg.timeout = std::chrono::milliseconds(2000);
  cfg.retry.max_retries = 3;
  cfg.retry.initial_backoff = std::chrono::milliseconds(1);
  cfg.mask_marker = "<MASK>";
  return cfg;
}

}  // namespace

TEST(RemoteBackend, MatchesInProcessBackend) {
  auto mock = std::make_shared<MockBackend>(mock_spec(), "<MASK>");
  TestServer server(mock, 0);
  RemoteBackend remote(remote_config(server.endpoint()));
  EntailmentQuery eq{"i am happy", {"It is positive", "It is negative"}};
  EXPECT_EQ(remote.entail(eq), mock->entail(eq));
  MaskFillQuery mq{"awful day <MASK>", {"positive", "negative"}};
  EXPECT_EQ(remote.mask_fill(mq), mock->mask_fill(mq));
}

TEST(RemoteBackend, RetriesTransientFailures) {
  auto mock = std::make_shared<MockBackend>(mock_spec(), "<MASK>");
  TestServer server(mock, 2);
  RemoteBackend remote(remote_config(server.endpoint()));
  auto scores = remote.entail({"i am happy", {"It is positive", "It is negative"}});
  EXPECT_EQ(scores.size(), 2u);
  EXPECT_EQ(server.requests(), 3);
}

TEST(RemoteBackend, GivesUpAfterRetryBudget) {
  auto mock = std::make_shared<MockBackend>(mock_spec(), "<MASK>");
  TestServer server(mock, 100);
  RemoteBackend remote(remote_config(server.endpoint()));
  try {
    remote.entail({"x", {"It is positive"}});
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_TRUE(e.transient());
  }
  EXPECT_EQ(server.requests(), 4);
}

TEST(RemoteBackend, PermanentErrorNotRetried) {
  auto mock = std::make_shared<MockBackend>(mock_spec(), "<MASK>");
  TestServer server(mock, 0);
  RemoteBackend remote(remote_config(server.endpoint()));
  try {
    remote.mask_fill({"x <MASK>", {"unheard"}});
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_FALSE(e.transient());
    EXPECT_NE(std::string(e.what()).find("422"), std::string::npos) << e.what();
  }
  EXPECT_EQ(server.requests(), 1);
}

TEST(RemoteBackend, ConnectionRefusedIsTransient) {
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto cfg = remote_config("http://127.0.0.1:" + std::to_string(port));
  cfg.retry.max_retries = 1;
  RemoteBackend remote(cfg);
  try {
    remote.entail({"x", {"y"}});
    FAIL() << "expected BackendError";
  } catch (const BackendError& e) {
    EXPECT_TRUE(e.transient());
  }
}

TEST(BackendRequestHandler, RejectsBadRequests) {
  MockBackend mock(mock_spec());
  EXPECT_EQ(handle_backend_request(mock, "/v1/entail", "nope").status, 400);
  EXPECT_EQ(handle_backend_request(mock, "/v1/entail", "{}").status, 400);
  EXPECT_EQ(handle_backend_request(mock, "/v1/other", "{}").status, 404);
}
