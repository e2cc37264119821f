#include <gtest/gtest.h>

#include "support.hpp"

using namespace intentaug;
using namespace testing_support;

namespace {

TransportResponse chat_ok(const std::string& content) { return {200, mock::chat_body(content)}; }

CallContext ctx(const std::string& id = "generate/x") { return {id, CallKind::generate, 0, 5}; }

}  // namespace

TEST(Extract, ExactFormat) { EXPECT_EQ(extract_utterance(R"({"utterance": "Where is my card?"})"), "Where is my card?"); }

TEST(Extract, ProseWrapped) { EXPECT_EQ(extract_utterance(R"(Sure! Here you go: {"utterance":"hi"} hope it helps)"), "hi"); }

TEST(Extract, DistinctFailures) {
  auto failure = [](std::string_view raw) {
    try {
      extract_utterance(raw);
    } catch (const ExtractError& e) {
      return std::make_pair(e.failure(), std::string(e.what()));
    }
    return std::make_pair(ExtractFailure::no_json_object, std::string("no error"));
  };
  const auto empty = failure(R"({"utterance": ""})");
  EXPECT_EQ(empty.first, ExtractFailure::empty_utterance);
  EXPECT_NE(empty.second.find("empty utterance"), std::string::npos);
  EXPECT_EQ(failure(R"({"utterance": "   "})").first, ExtractFailure::empty_utterance);
  EXPECT_EQ(failure(R"({"text": "hi"})").first, ExtractFailure::missing_key);
  EXPECT_EQ(failure("no braces here").first, ExtractFailure::no_json_object);
  EXPECT_EQ(failure("{broken json").first, ExtractFailure::no_json_object);
}

TEST(Extract, SkipsInvalidObjectsAndHandlesBracesInStrings) {
  EXPECT_EQ(extract_utterance(R"({not json} then {"utterance": "a {b} c"})"), "a {b} c");
  EXPECT_EQ(extract_utterance("{\"utterance\": \"  two\\nlines \"}"), "two lines");
  EXPECT_EQ(extract_utterance(R"({"outer": {"x": 1}, "utterance": "nested ok"})"), "nested ok");
}

TEST(Generator, ScriptedResponse) {
  auto t = std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{chat_ok("R")});
  Generator g(quick_generator_config(), t, no_sleep());
  const auto c = g.complete("prompt", ctx());
  EXPECT_EQ(c.text, "R");
  EXPECT_EQ(c.record.attempt_count, 1);
  EXPECT_TRUE(c.record.ok);
  EXPECT_EQ(c.record.request_digest.size(), 64u);
}

TEST(Generator, RetriesServerErrors) {
  auto t = std::make_shared<mock::ScriptedTransport>(
      std::vector<TransportResponse>{{500, "{}"}, {500, "{}"}, chat_ok(R"({"utterance":"ok"})")});
  std::vector<Millis> sleeps;
  Generator g(quick_generator_config(2), t, [&](Millis d) { sleeps.push_back(d); });
  const auto c = g.generate_utterance("prompt", ctx());
  EXPECT_EQ(c.text, "ok");
  EXPECT_EQ(c.record.attempt_count, 3);
  EXPECT_EQ(t->calls(), 3u);
  EXPECT_EQ(sleeps.size(), 2u);
}

TEST(Generator, EndpointDownWithoutRetries) {
  auto t = std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{{-1, ""}});
  Generator g(quick_generator_config(0), t, no_sleep());
  try {
    g.complete("prompt", ctx("generate/syn-1"));
    FAIL();
  } catch (const CallFailed& e) {
    EXPECT_EQ(e.kind(), ErrorKind::provider);
    EXPECT_EQ(e.record().call_id, "generate/syn-1");
    EXPECT_EQ(e.record().attempt_count, 1);
    EXPECT_FALSE(e.record().ok);
    EXPECT_FALSE(e.malformed_output());
    EXPECT_NE(std::string(e.what()).find("generate/syn-1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(e.record().request_digest), std::string::npos);
  }
  EXPECT_EQ(t->calls(), 1u);
}

TEST(Generator, ClientErrorsAreNotRetried) {
  auto t = std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{{400, "{}"}, chat_ok("x")});
  Generator g(quick_generator_config(3), t, no_sleep());
  EXPECT_THROW(g.complete("p", ctx()), CallFailed);
  EXPECT_EQ(t->calls(), 1u);

  auto t2 = std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{{429, "{}"}, chat_ok("x")});
  Generator g2(quick_generator_config(3), t2, no_sleep());
  EXPECT_EQ(g2.complete("p", ctx()).record.attempt_count, 2);
}

TEST(Generator, MalformedOutputCountsAsRetry) {
  auto t = std::make_shared<mock::ScriptedTransport>(
      std::vector<TransportResponse>{chat_ok("no json"), chat_ok(R"({"utterance": ""})"), chat_ok(R"({"utterance":"fine"})")});
  Generator g(quick_generator_config(2), t, no_sleep());
  const auto c = g.generate_utterance("p", ctx());
  EXPECT_EQ(c.text, "fine");
  EXPECT_EQ(c.record.attempt_count, 3);

  auto bad = std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{chat_ok("never json")});
  Generator g2(quick_generator_config(1), bad, no_sleep());
  try {
    g2.generate_utterance("p", ctx());
    FAIL();
  } catch (const CallFailed& e) {
    EXPECT_TRUE(e.malformed_output());
    EXPECT_EQ(e.record().attempt_count, 2);
  }
}

TEST(Generator, AttemptCountBoundedByRetries) {
  for (int retries = 0; retries <= 4; ++retries) {
    auto t = std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{{503, "{}"}});
    Generator g(quick_generator_config(retries), t, no_sleep());
    try {
      g.complete("p", ctx());
      FAIL();
    } catch (const CallFailed& e) {
      EXPECT_EQ(e.record().attempt_count, retries + 1);
    }
  }
}

TEST(Generator, RequestShape) {
  auto t = std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{chat_ok("x")});
  auto cfg = quick_generator_config();
  cfg.model_name = "m1";
  cfg.temperature = 0.3;
  Generator g(cfg, t, no_sleep());
  g.complete("the prompt", ctx());
  const auto [route, body] = t->requests().front();
  EXPECT_EQ(route, "/chat/completions");
  const auto j = nlohmann::json::parse(body);
  EXPECT_EQ(j["model"], "m1");
  EXPECT_EQ(j["messages"].size(), 1u);
  EXPECT_EQ(j["messages"][0]["role"], "user");
  EXPECT_EQ(j["messages"][0]["content"], "the prompt");
  EXPECT_DOUBLE_EQ(j["temperature"].get<double>(), 0.3);
  EXPECT_EQ(j["seed"], 5);
}

TEST(Generator, InvalidConfigRejected) {
  auto cfg = quick_generator_config();
  cfg.retry.max_retries = -1;
  cfg.request_parallelism = 0;
  try {
    Generator g(cfg, std::make_shared<mock::ScriptedTransport>(std::vector<TransportResponse>{chat_ok("x")}));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.messages().size(), 2u);
  }
}

TEST(Backoff, GrowsAndIsCapped) {
  RetryPolicy p;
  p.initial_backoff = Millis(100);
  p.backoff_factor = 2.0;
  p.max_backoff = Millis(300);
  for (int i = 0; i < 50; ++i) {
    const auto d1 = backoff_delay(p, 1).count();
    const auto d3 = backoff_delay(p, 3).count();
    EXPECT_GE(d1, 50);
    EXPECT_LE(d1, 100);
    EXPECT_GE(d3, 150);
    EXPECT_LE(d3, 300);
  }
}

TEST(Encoder, HashEncoderIsDeterministicAndNormalized) {
  auto ep = std::make_shared<mock::MockEndpoint>(
      mock::ChatFn{}, [](std::string_view t) { return mock::hash_embedding(t, 32); });
  Encoder enc(quick_encoder_config(), mock::endpoint_transport(ep), no_sleep());
  const std::vector<std::string> texts{"a", "a", "b"};
  const auto out = enc.embed_batch(texts, "embed/t", 0);
  ASSERT_EQ(out.embeddings.size(), 3u);
  EXPECT_EQ(out.embeddings[0].vector, out.embeddings[1].vector);
  EXPECT_NE(out.embeddings[0].vector, out.embeddings[2].vector);
  for (const auto& e : out.embeddings) {
    EXPECT_NEAR(l2_norm(e.vector), 1.0, 1e-6);
    EXPECT_TRUE(e.normalized);
    EXPECT_EQ(e.dim(), 32u);
  }
  // Same vector as computed directly, across calls.
  EXPECT_EQ(out.embeddings[2].vector, mock::hash_embedding("b", 32));
}

TEST(Encoder, NormalizesRawVectors) {
  auto t = mock::table_encoder({{"x", {3.0, 4.0}}, {"y", {0.0, 0.5}}});
  Encoder enc(quick_encoder_config(), t, no_sleep());
  const std::vector<std::string> texts{"x", "y"};
  const auto out = enc.embed_batch(texts, "embed/t", 0);
  EXPECT_NEAR(out.embeddings[0].vector[0], 0.6, 1e-12);
  EXPECT_NEAR(out.embeddings[1].vector[1], 1.0, 1e-12);

  auto cfg = quick_encoder_config();
  cfg.normalize = false;
  Encoder raw(cfg, t, no_sleep());
  EXPECT_EQ(raw.embed_batch(texts, "embed/t", 0).embeddings[0].vector, (std::vector<double>{3.0, 4.0}));
}

TEST(Encoder, CountMismatch) {
  auto t = std::make_shared<FunctionTransport>([](std::string_view, std::string_view body) {
    auto req = nlohmann::json::parse(body);
    req["input"].erase(req["input"].size() - 1);
    return TransportResponse{200, mock::embeddings_body(req, [](std::string_view s) { return mock::hash_embedding(s, 4); })};
  });
  Encoder enc(quick_encoder_config(), t, no_sleep());
  const std::vector<std::string> texts{"a", "b", "c"};
  try {
    enc.embed_batch(texts, "embed/t", 0);
    FAIL();
  } catch (const CallFailed& e) {
    EXPECT_NE(std::string(e.what()).find("count mismatch"), std::string::npos);
  }
}

TEST(Encoder, DimensionZeroAndNonFiniteChecks) {
  auto cfg = quick_encoder_config();
  cfg.expected_dim = 3;
  Encoder enc(cfg, mock::table_encoder({{"a", {1, 0}}}), no_sleep());
  const std::vector<std::string> a{"a"};
  EXPECT_THROW(enc.embed_batch(a, "e", 0), CallFailed);

  Encoder mixed(quick_encoder_config(), mock::table_encoder({{"a", {1, 0}}, {"b", {1, 0, 0}}}), no_sleep());
  const std::vector<std::string> ab{"a", "b"};
  EXPECT_THROW(mixed.embed_batch(ab, "e", 0), CallFailed);

  Encoder zero(quick_encoder_config(), mock::table_encoder({{"a", {0, 0}}}), no_sleep());
  EXPECT_THROW(zero.embed_batch(a, "e", 0), CallFailed);

  const std::vector<std::string> none;
  EXPECT_THROW(zero.embed_batch(none, "e", 0), DataError);
}

TEST(Encoder, OrderPreservedAndChunked) {
  auto cfg = quick_encoder_config();
  cfg.batch_size = 2;
  // Server answers with shuffled indices.
  auto t = std::make_shared<FunctionTransport>([](std::string_view, std::string_view body) {
    const auto req = nlohmann::json::parse(body);
    nlohmann::json data = nlohmann::json::array();
    for (std::size_t i = req["input"].size(); i-- > 0;) {
      data.push_back({{"index", i}, {"embedding", mock::hash_embedding(req["input"][i].get<std::string>(), 8)}});
    }
    return TransportResponse{200, nlohmann::json{{"data", data}}.dump()};
  });
  Encoder enc(cfg, t, no_sleep());
  const std::vector<std::string> texts{"t0", "t1", "t2", "t3", "t4"};
  const auto out = enc.embed_batch(texts, "embed/icl", 0);
  ASSERT_EQ(out.records.size(), 3u);
  EXPECT_EQ(out.records[0].call_id, "embed/icl/0");
  EXPECT_EQ(out.records[2].call_id, "embed/icl/2");
  // Re-normalizing a unit vector may move the last bit, so compare with a tolerance.
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto want = mock::hash_embedding(texts[i], 8);
    for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(out.embeddings[i].vector[k], want[k], 1e-12) << texts[i];
  }
}

TEST(MockEndpoint, FailFirstThenServe) {
  auto ep = std::make_shared<mock::MockEndpoint>(mock::convergent_chat,
                                                 [](std::string_view t) { return mock::hash_embedding(t, 4); }, 2);
  auto t = mock::endpoint_transport(ep);
  Generator g(quick_generator_config(2), t, no_sleep());
  const auto c = g.generate_utterance(prompts::render_generation({"greet", "hotel", {"hello"}}), ctx());
  EXPECT_EQ(c.record.attempt_count, 3);
  EXPECT_NE(c.text.find("hello"), std::string::npos);
  EXPECT_EQ(ep->request_count(), 3);
  EXPECT_EQ(ep->handle("/nope", "{}").status, 404);
  EXPECT_EQ(ep->handle("/chat/completions", "not json").status, 400);
}

TEST(Http, MockServerRoundTrip) {
  auto ep = std::make_shared<mock::MockEndpoint>(mock::echo_intent_chat,
                                                 [](std::string_view t) { return mock::hash_embedding(t, 16); }, 1);
  MockServer server(ep);
  server.start();
  auto gen_cfg = quick_generator_config(1);
  gen_cfg.timeout = Millis(5000);
  Generator g(gen_cfg, std::make_shared<HttpTransport>(server.base_url(), "secret", gen_cfg.timeout), no_sleep());
  const auto c = g.generate_utterance(prompts::render_generation({"book room", "hotel", {"a room please"}}), ctx());
  EXPECT_EQ(c.text, "book room");
  EXPECT_EQ(c.record.attempt_count, 2);

  Encoder enc(quick_encoder_config(), std::make_shared<HttpTransport>(server.base_url(), "", Millis(5000)), no_sleep());
  const std::vector<std::string> texts{"x", "y"};
  const auto out = enc.embed_batch(texts, "embed/t", 0);
  EXPECT_EQ(out.embeddings[1].vector, mock::hash_embedding("y", 16));
  server.stop();

  Generator down(quick_generator_config(0), std::make_shared<HttpTransport>(server.base_url(), "", Millis(500)),
                 no_sleep());
  EXPECT_THROW(down.complete("p", ctx()), CallFailed);
}

TEST(Http, EndpointParsing) {
  const auto e = parse_endpoint("https://api.example.com:8443/v1/");
  EXPECT_EQ(e.origin, "https://api.example.com:8443");
  EXPECT_EQ(e.base_path, "/v1");
  EXPECT_EQ(parse_endpoint("http://localhost:8080").base_path, "");
  EXPECT_THROW(parse_endpoint("ftp://x"), ConfigError);
  EXPECT_THROW(parse_endpoint("localhost:8080"), ConfigError);
}
