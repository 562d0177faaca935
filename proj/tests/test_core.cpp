#include <gtest/gtest.h>

#include <random>
#include <string>

#include "grpo_agg/core.hpp"
#include "test_support.hpp"

using namespace grpo_agg;

namespace {

const char* kBinary = R"({
  "contexts": [{"id": "q", "weight": 1.0, "outputs": [
    {"id": "a", "ref_prob": 0.3, "reward": {"kind": "deterministic", "value": 1}},
    {"id": "b", "ref_prob": 0.7, "reward": {"kind": "deterministic", "value": 0}}]}],
  "hyper": {"beta": 0.04, "group_size": 2}
})";

std::string with_probs(const std::string& a, const std::string& b) {
  return R"({"contexts": [{"id": "q", "weight": 1, "outputs": [
    {"id": "a", "ref_prob": )" + a + R"(, "reward": {"kind": "deterministic", "value": 1}},
    {"id": "b", "ref_prob": )" + b + R"(, "reward": {"kind": "bernoulli", "p": 0.5}}]}],
    "hyper": {"beta": 1, "group_size": "limit"}})";
}

template <typename E>
std::string error_of(const std::string& text) {
  try {
    load_scenario(text);
  } catch (const E& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(LoadScenario, BinaryDocument) {
  const Scenario s = load_scenario(kBinary);
  ASSERT_EQ(s.contexts.size(), 1u);
  ASSERT_EQ(s.contexts[0].size(), 2u);
  EXPECT_EQ(s.contexts[0].outputs[0].id, "a");
  EXPECT_DOUBLE_EQ(s.contexts[0].outputs[0].ref_prob, 0.3);
  EXPECT_EQ(s.contexts[0].outputs[0].reward, RewardSpec::deterministic(1.0));
  EXPECT_DOUBLE_EQ(s.hyper.beta, 0.04);
  EXPECT_EQ(s.hyper.group_size, GroupSize::finite(2));
  EXPECT_EQ(s.hyper.penalty, Penalty::kl0);
  EXPECT_EQ(s.hyper.normalisation, Normalisation::shift_scale);
}

TEST(LoadScenario, ProbabilitiesMustSumToOne) {
  const std::string msg = error_of<ValidationError>(with_probs("0.5", "0.6"));
  EXPECT_NE(msg.find("probabilities sum to 1.1"), std::string::npos) << msg;
}

TEST(LoadScenario, LimitGroupSize) {
  const Scenario s = load_scenario(with_probs("0.5", "0.5"));
  EXPECT_TRUE(s.hyper.group_size.is_limit());
  EXPECT_TRUE(s.contexts[0].outputs[1].reward.is_bernoulli());
}

TEST(LoadScenario, RejectsMalformedDocuments) {
  EXPECT_FALSE(error_of<ParseError>("{not json").empty());
  std::string unknown = kBinary;
  unknown.replace(unknown.find("\"group_size\""), 12, "\"groupsize\": 2, \"group_size\"");
  EXPECT_NE(error_of<ParseError>(unknown).find("unknown key 'groupsize'"), std::string::npos);

  std::string small_group = kBinary;
  small_group.replace(small_group.find("\"group_size\": 2"), 15, "\"group_size\": 1");
  EXPECT_NE(error_of<ValidationError>(small_group).find("group_size 1 < 2"), std::string::npos);

  std::string bad_beta = kBinary;
  bad_beta.replace(bad_beta.find("0.04"), 4, "-1");
  EXPECT_FALSE(error_of<ValidationError>(bad_beta).empty());

  std::string bad_kind = kBinary;
  bad_kind.replace(bad_kind.find("deterministic"), 13, "gaussian");
  EXPECT_FALSE(error_of<ParseError>(bad_kind).empty());

  std::string bad_p = with_probs("0.5", "0.5");
  bad_p.replace(bad_p.find("\"p\": 0.5"), 8, "\"p\": 1.5");
  EXPECT_FALSE(error_of<ValidationError>(bad_p).empty());
}

TEST(LoadScenario, RenormalizesWithinTolerance) {
  const Scenario s = load_scenario(with_probs("0.3", "0.7000000000001"));
  const double total = s.contexts[0].outputs[0].ref_prob + s.contexts[0].outputs[1].ref_prob;
  EXPECT_NEAR(total, 1.0, 1e-15);
}

TEST(LoadScenario, RoundTripIsIdentity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Scenario s;
    const std::size_t k = 1 + rng() % 3;
    double wsum = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      ContextSpec c = testing_support::random_context(2 + rng() % 4, rng);
      c.id = "q" + std::to_string(j);
      c.weight = 1.0 / static_cast<double>(k);
      wsum += c.weight;
      s.contexts.push_back(c);
    }
    ASSERT_NEAR(wsum, 1.0, 1e-12);
    s.hyper.beta = 0.01 + uniform01(rng);
    s.hyper.group_size = rng() % 2 ? GroupSize::limit() : GroupSize::finite(2 + rng() % 6);
    s.hyper.penalty = rng() % 2 ? Penalty::kl0 : Penalty::direct_kl;
    s.hyper.normalisation = rng() % 2 ? Normalisation::shift_scale : Normalisation::shift_only;
    const Scenario once = load_scenario(serialize(s));
    const Scenario twice = load_scenario(serialize(once));
    EXPECT_EQ(once, s);
    EXPECT_EQ(twice, once);
  }
}

TEST(ValidatePolicy, ReferencePolicyIsValid) {
  const Scenario s = load_scenario(kBinary);
  EXPECT_NO_THROW(validate_policy(reference_policy(s), s));
}

TEST(ValidatePolicy, MassOffReferenceSupport) {
  Scenario s = load_scenario(with_probs("1", "0"));
  EXPECT_THROW(validate_policy({{0.5, 0.5}}, s), SupportError);
}

TEST(ValidatePolicy, NotNormalised) {
  const Scenario s = load_scenario(kBinary);
  EXPECT_THROW(validate_policy({{0.3, 0.699999}}, s), ValidationError);
  EXPECT_THROW(validate_policy({{0.3, 0.7}, {0.5, 0.5}}, s), ValidationError);
  EXPECT_THROW(validate_policy({{1.2, -0.2}}, s), ValidationError);
}

TEST(RewardSpec, Moments) {
  EXPECT_DOUBLE_EQ(RewardSpec::bernoulli(0.25).variance(), 0.1875);
  EXPECT_DOUBLE_EQ(RewardSpec::deterministic(-3.5).mean(), -3.5);
  EXPECT_EQ(RewardSpec::deterministic(-3.5).variance(), 0.0);
  EXPECT_FALSE(RewardSpec::bernoulli(1.0).is_random());
  EXPECT_THROW(RewardSpec::bernoulli(-0.1), ValidationError);
  EXPECT_THROW(GroupSize::finite(1), ValidationError);
}
