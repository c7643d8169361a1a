// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "../support.hpp"

using namespace rrm;

TEST(SamplingParams, Validation) {
  EXPECT_NO_THROW((SamplingParams{}.validate()));
  for (auto bad : {SamplingParams{-0.1, 0.9, 10, 1, {}}, SamplingParams{0.7, 0.0, 10, 1, {}},
                   SamplingParams{0.7, 1.1, 10, 1, {}}, SamplingParams{0.7, 0.9, 10, 0, {}}})
    EXPECT_THROW(bad.validate(), Error);
}

TEST(MockGenerate, CannedTableLookup) {
  MockSpec spec;
  PromptContext p{"some prompt", {}};
  spec.set_canned(p, {"r1", "r2"});
  MockBackend mock(spec);
  SamplingParams params;
  params.n_samples = 2;
  auto out = mock.generate(p, params);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].text, "r1");
  EXPECT_EQ(out[1].text, "r2");
}

TEST(MockGenerate, SeededCannedIndexWalksTheList) {
  MockSpec spec;
  PromptContext p{"prompt", {}};
  spec.set_canned(p, {"r0", "r1", "r2"});
  MockBackend mock(spec);
  SamplingParams params;
  params.seed = 4;
  EXPECT_EQ(mock.generate(p, params)[0].text, "r1");
}

TEST(MockGenerate, SeededIsDeterministicAndGreedyCollapses) {
  MockBackend mock;
  const auto p = render_reward_prompt("Q", "a", "b", true);
  SamplingParams params;
  params.n_samples = 4;
  params.seed = 9;
  auto first = mock.generate(p, params);
  auto second = mock.generate(p, params);
  ASSERT_EQ(first.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(first[i].text, second[i].text);
  params.temperature = 0.0;
  auto greedy = mock.generate(p, params);
  for (const auto& c : greedy) EXPECT_EQ(c.text, greedy[0].text);
}

TEST(MockGenerate, SynthesizedOutputsFollowTheTemplates) {
  MockBackend mock;
  SamplingParams params;
  params.seed = 1;
  params.n_samples = 8;
  for (const auto& c : mock.generate(render_reward_prompt("Q", "a", "b", true), params))
    EXPECT_TRUE(scan_rationale(c.text).block) << c.text;
  for (const auto& c : mock.generate(render_reward_prompt("Q", "a", "b", false), params))
    EXPECT_TRUE(parse_label(c.text)) << c.text;
  for (const auto& c : mock.generate(render_prover_prompt("Q", "a", "b", Label::B), params))
    EXPECT_NO_THROW(proof_to_rationale(c.text, Label::B)) << c.text;
}

TEST(MockGenerate, PreferenceTableDrivesVerdict) {
  MockSpec spec;
  spec.set_preference("Q", "a", "b", Label::B);
  MockBackend mock(spec);
  SamplingParams params;
  params.n_samples = 5;
  for (const auto& c : mock.generate(render_reward_prompt("Q", "a", "b", true), params))
    EXPECT_EQ(parse_rationale(c.text).answer, Label::B);
}

TEST(MockGenerate, FailingPromptRaises) {
  MockSpec spec;
  PromptContext p{"fails", {}};
  spec.failing_prompts.insert(digest(p.prompt_text));
  MockBackend mock(spec);
  try {
    mock.generate(p, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendUnavailable);
    EXPECT_TRUE(e.retryable());
  }
}

TEST(MockScore, TableLookupAndErrors) {
  MockSpec spec;
  spec.set_sequence_logprob("P", "C", -12.5);
  MockBackend mock(spec);
  EXPECT_DOUBLE_EQ(mock.score_sequence("P", "C"), -12.5);
  EXPECT_THROW(mock.score_sequence("P", ""), Error);
  spec.scoring_supported = false;
  MockBackend unsupported(spec);
  try {
    unsupported.score_sequence("P", "D");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScoringUnsupported);
  }
}

TEST(MockScore, TokenLogprobsSum) {
  Completion c{"xy", {{"x", -1.0}, {"y", -2.0}}, FinishReason::stop};
  EXPECT_DOUBLE_EQ(sum_logprobs(c), -3.0);
}

TEST(MockScore, AdditiveOverSplitPoints) {
  std::mt19937_64 rng(17);
  MockBackend mock;
  for (int i = 0; i < 500; ++i) {
    const std::string p = rrm::testing::random_sentence(rng, 0, 6);
    const std::string c = rrm::testing::random_sentence(rng, 1, 10) + " " + rrm::testing::random_sentence(rng);
    const std::size_t cut = 1 + rng() % (c.size() - 1);
    const std::string c1 = c.substr(0, cut), c2 = c.substr(cut);
    const double whole = mock.score_sequence(p, c);
    const double parts = mock.score_sequence(p, c1) + mock.score_sequence(p + c1, c2);
    EXPECT_EQ(whole, parts) << p << "|" << c1 << "|" << c2;
    EXPECT_LT(whole, 0.0);
    EXPECT_TRUE(std::isfinite(whole));
  }
}

TEST(MockLabels, LogitTableSymmetryAndShift) {
  MockSpec spec;
  PromptContext p{"prompt", {}}, q{"other", {}};
  spec.set_label_logits(p, -2.0, -2.0);
  spec.set_label_logits(q, 5.0 - 0.1, 5.0 - 2.4);
  MockBackend mock(spec);
  auto d = mock.label_logprobs(p, std::nullopt);
  EXPECT_DOUBLE_EQ(d.prob_a, 0.5);
  EXPECT_NEAR(mock.label_logprobs(q, std::nullopt).prob_a, 0.9088770389851439, 1e-12);
}

TEST(MockLabels, RandomizedFallbackIsNormalized) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 300; ++i) {
    MockSpec spec;
    spec.default_logit_noise_seed = static_cast<std::int64_t>(rng());
    MockBackend mock(spec);
    const auto p = render_reward_prompt(rrm::testing::random_sentence(rng), rrm::testing::random_sentence(rng),
                                        rrm::testing::random_sentence(rng), true);
    auto d = mock.label_logprobs(p, std::nullopt);
    EXPECT_GE(d.prob_a, 0.0);
    EXPECT_LE(d.prob_a, 1.0);
    EXPECT_NEAR(d.prob_a + d.prob_b, 1.0, 1e-9);
  }
}

TEST(MockLabels, SpecFromJson) {
  auto spec = MockSpec::from_json(nlohmann::json::parse(R"({
    "label_logits": [{"input": "Q", "response_a": "a", "response_b": "b", "prob_a": 0.73},
                     {"prompt": "raw", "logits": [0.0, null]}],
    "preference_table": [{"input": "Q", "response_a": "a", "response_b": "b", "label": "B"}],
    "canned_generations": [{"prompt": "raw", "outputs": ["hello"]}]
  })"));
  MockBackend mock(spec);
  EXPECT_EQ(mock.label_logprobs(render_reward_prompt("Q", "a", "b", true), std::nullopt).prob_a, 0.73);
  EXPECT_EQ(mock.label_logprobs({"raw", {}}, std::nullopt).prob_a, 1.0);
  EXPECT_EQ(mock.generate({"raw", {}}, {})[0].text, "hello");
}

TEST(MockTokens, WhitespaceRule) {
  MockBackend mock;
  EXPECT_EQ(mock.count_tokens(""), 0u);
  EXPECT_EQ(mock.count_tokens("a b c"), 3u);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    auto x = rrm::testing::random_sentence(rng, 0, 5), y = rrm::testing::random_sentence(rng, 0, 5);
    EXPECT_EQ(mock.count_tokens(x + " " + y), mock.count_tokens(x) + mock.count_tokens(y));
  }
}

TEST(Retry, RetriesRetryableUpToLimit) {
  std::atomic<std::uint64_t> attempts{0};
  std::vector<long> sleeps;
  RetryPolicy policy{4, std::chrono::milliseconds(100), std::chrono::milliseconds(250)};
  int calls = 0;
  try {
    with_retry(
        policy, [&]() -> int { ++calls; throw Error(ErrorCode::RateLimited); }, &attempts,
        [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RateLimited);
  }
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(attempts.load(), 4u);
  EXPECT_EQ(sleeps, (std::vector<long>{100, 200, 250}));
}

TEST(Retry, NonRetryablePropagatesImmediately) {
  int calls = 0;
  EXPECT_THROW(with_retry(RetryPolicy{}, [&]() -> int { ++calls; throw Error(ErrorCode::ContextOverflow); }),
               Error);
  EXPECT_EQ(calls, 1);
}

TEST(Retry, SucceedsAfterTransientFailures) {
  int calls = 0;
  auto v = with_retry(
      RetryPolicy{}, [&] {
        if (++calls < 3) throw Error(ErrorCode::BackendUnavailable);
        return 7;
      },
      nullptr, [](std::chrono::milliseconds) {});
  EXPECT_EQ(v, 7);
  EXPECT_EQ(calls, 3);
}

TEST(TokenBucket, BurstThenEmpty) {
  TokenBucket b(0.001, 3);
  EXPECT_TRUE(b.try_acquire());
  EXPECT_TRUE(b.try_acquire());
  EXPECT_TRUE(b.try_acquire());
  EXPECT_FALSE(b.try_acquire());
}

TEST(DeriveSeed, StableAndDistinct) {
  EXPECT_EQ(derive_seed(1, "id", 0), derive_seed(1, "id", 0));
  EXPECT_NE(derive_seed(1, "id", 0), derive_seed(1, "id", 1));
  EXPECT_NE(derive_seed(1, "id", 0), derive_seed(2, "id", 0));
  EXPECT_GE(derive_seed(-1, "x", 3), 0);
}

TEST(ParallelFor, CoversEveryIndexAndRethrowsLowestFailure) {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 30) throw Error(ErrorCode::InvalidArgument, std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.detail(), "7");
  }
}
