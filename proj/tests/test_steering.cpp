// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "support.hpp"
#include "tempsteer/error.hpp"
#include "tempsteer/steering.hpp"

using namespace tempsteer;
using namespace tempsteer::steering;
using engine::InjectionPlan;
using engine::TapRequest;

namespace {

const engine::ModelBundle& deep_model() {
  static const auto m = tstest::small_model(41, 8, 32);
  return m;
}

SteeringSpec one(const std::string& text, float c) { return {{{text, c}}, PromptStyle::year_only, 2015}; }

}  // namespace

TEST_CASE("max_token_length counts <bos> plus words") {
  const auto& m = deep_model();
  CHECK(max_token_length(m, {{"2015", 4}}) == 2);
  CHECK(max_token_length(m, {{"2015", 1}, {"2016", -1}}) == 2);
  CHECK(max_token_length(m, {{"2021", 4}, {"recent", -2}}) == 2);
  CHECK(max_token_length(m, {{"2010", 4}, {"the year is 2010", -2}}) == 5);
}

TEST_CASE("steering prompts are right-padded with <pad>") {
  const auto& m = deep_model();
  const auto ids = steering_tokens(m, "2010", 4);
  CHECK(ids == engine::TokenIds{engine::Vocab::bos_id, *m.vocab().find("2010"), engine::Vocab::pad_id,
                                engine::Vocab::pad_id});
  CHECK_THROWS_AS(steering_tokens(m, "the year is 2010", 3), Error);
}

TEST_CASE("coefficient 1 reproduces the raw tapped activations") {
  const auto& m = deep_model();
  const auto ae = build_layer_vector(m, one("2015", 1.0f), 5);
  const auto raw = engine::prefill(m, steering_tokens(m, "2015", 2), TapRequest{{5}}).tapped.at(5);
  CHECK(bit_equal(ae, raw));
}

TEST_CASE("opposite coefficients on one prompt cancel exactly") {
  const auto& m = deep_model();
  SteeringSpec s{{{"the year is 1999", 1.0f}, {"the year is 1999", -1.0f}}, PromptStyle::contrasting_pair, 1999};
  for (int l = 0; l < m.config().n_layers; ++l) CHECK(build_layer_vector(m, s, l).max_abs() == 0.0f);
}

TEST_CASE("vectors are linear in the coefficients") {
  const auto& m = deep_model();
  std::mt19937_64 rng(77);
  const auto words = tstest::test_words();
  for (int trial = 0; trial < 5; ++trial) {
    const std::string a = words[rng() % words.size()] + " " + words[rng() % words.size()];
    const std::string b = words[rng() % words.size()] + " " + words[rng() % words.size()];
    const float ca = 0.5f + static_cast<float>(rng() % 7);
    const float cb = -0.5f - static_cast<float>(rng() % 7);
    const int layer = static_cast<int>(rng() % 8);
    const SteeringSpec pair{{{a, ca}, {b, cb}}, PromptStyle::contrasting_pair, 2000};
    const auto combined = build_layer_vector(m, pair, layer);
    const auto expected = build_layer_vector(m, one(a, 1.0f), layer) * ca + build_layer_vector(m, one(b, 1.0f), layer) * cb;
    CHECK(max_abs_diff(combined, expected) <= 1e-5f);

    SteeringSpec doubled = pair;
    for (auto& p : doubled.prompts) p.coefficient *= 2.0f;
    CHECK(bit_equal(build_layer_vector(m, doubled, layer), combined * 2.0f));
  }
}

TEST_CASE("temporal prompt sets use the published coefficients") {
  using K = LayerMode;
  CHECK(temporal_prompt_set(PromptStyle::year_only, 2010, K::single(6)).prompts ==
        std::vector<WeightedPrompt>{{"2010", 4.0f}});
  CHECK(temporal_prompt_set(PromptStyle::context_phrase, 2010, K::single(6)).prompts ==
        std::vector<WeightedPrompt>{{"the year is 2010", 4.0f}});
  CHECK(temporal_prompt_set(PromptStyle::contrasting_pair, 2021, K::single(6)).prompts ==
        std::vector<WeightedPrompt>{{"2021", 4.0f}, {"recent", -2.0f}});
  CHECK(temporal_prompt_set(PromptStyle::year_only, 2010, K::multi(7)).prompts ==
        std::vector<WeightedPrompt>{{"2010", 1.0f}});
  CHECK(temporal_prompt_set(PromptStyle::context_phrase, 2010, K::multi(7)).prompts ==
        std::vector<WeightedPrompt>{{"the year is 2010", 1.0f}});
  CHECK(temporal_prompt_set(PromptStyle::contrasting_pair, 2021, K::multi(7)).prompts ==
        std::vector<WeightedPrompt>{{"2021", 2.0f}, {"recent", -1.0f}});

  CHECK_THROWS_AS(temporal_prompt_set(PromptStyle::year_only, 999, K::single(4)), Error);
  CHECK_THROWS_AS(parse_style("yearly"), Error);
  CHECK(parse_style("contrasting_pair") == PromptStyle::contrasting_pair);

  CoefficientTable custom = CoefficientTable::defaults();
  custom.single[PromptStyle::year_only] = {8.0f};
  CHECK(temporal_prompt_set(PromptStyle::year_only, 2010, K::single(4), custom).prompts[0].coefficient == 8.0f);
  custom.multi[PromptStyle::contrasting_pair] = {1.0f};
  CHECK_THROWS_AS(temporal_prompt_set(PromptStyle::contrasting_pair, 2010, K::multi(5), custom), Error);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS((SteeringSpec{{{"2010", 1.0f}, {"2011", 1.0f}}, PromptStyle::contrasting_pair, 2010}.validate()), Error);
  CHECK_THROWS_AS((SteeringSpec{{{"2010", 0.0f}}, PromptStyle::year_only, 2010}.validate()), Error);
  CHECK_THROWS_AS((SteeringSpec{{{"", 1.0f}}, PromptStyle::year_only, 2010}.validate()), Error);
  CHECK_THROWS_AS((SteeringSpec{{{"2010", 1.0f}, {"x", -1.0f}}, PromptStyle::year_only, 2010}.validate()), Error);
  CHECK_THROWS_AS((SteeringSpec{{}, PromptStyle::year_only, 2010}.validate()), Error);
}

TEST_CASE("layer modes") {
  CHECK(LayerMode::single(6).label() == "L6");
  CHECK(LayerMode::multi(10).label() == "L4-10");
  CHECK(LayerMode::multi(7).layers() == std::vector<int>{4, 5, 6, 7});
  CHECK_THROWS_AS(LayerMode::multi(8).validate(8), Error);
  CHECK_THROWS_AS(LayerMode::multi(3).validate(8), Error);
  CHECK_NOTHROW(LayerMode::multi(7).validate(8));
}

TEST_CASE("plans have one entry per layer, each built at that layer") {
  const auto& m = deep_model();
  const auto single_spec = temporal_prompt_set(PromptStyle::contrasting_pair, 2021, LayerMode::single(6));
  const auto single = build_plan(m, single_spec, LayerMode::single(6));
  REQUIRE(single.size() == 1);
  CHECK(single.entries()[0].layer == 6);
  CHECK(single.entries()[0].ae.dim(0) == max_token_length(m, single_spec.prompts));

  const auto multi_spec = temporal_prompt_set(PromptStyle::context_phrase, 2010, LayerMode::multi(7));
  const auto multi = build_plan(m, multi_spec, LayerMode::multi(7));
  CHECK(multi.layers() == std::vector<int>{4, 5, 6, 7});
  for (const auto& e : multi.entries()) {
    CHECK(e.ae.dim(0) == 5);
    CHECK(bit_equal(e.ae, build_layer_vector(m, multi_spec, e.layer)));
  }
  CHECK_THROWS_AS(build_plan(m, multi_spec, LayerMode::multi(9)), Error);
}

TEST_CASE("multi(4,4) steers exactly like single(4) at equal coefficients") {
  const auto& m = deep_model();
  const auto spec = temporal_prompt_set(PromptStyle::contrasting_pair, 2021, LayerMode::multi(4));
  const auto a = build_plan(m, spec, LayerMode::multi(4));
  const auto b = build_plan(m, spec, LayerMode::single(4));
  const auto prompt = engine::encode_with_bos(m, "Who is the current leader of Aland ?");
  CHECK(bit_equal(engine::prefill(m, prompt, {}, &a).logits, engine::prefill(m, prompt, {}, &b).logits));
}

TEST_CASE("independent multi reading yields one single-layer plan per layer") {
  const auto& m = deep_model();
  const auto spec = temporal_prompt_set(PromptStyle::year_only, 2010, LayerMode::multi(6));
  const auto sim = build_plans(m, spec, LayerMode::multi(6), MultiReading::simultaneous);
  REQUIRE(sim.size() == 1);
  CHECK(sim[0].size() == 3);
  const auto ind = build_plans(m, spec, LayerMode::multi(6), MultiReading::independent);
  REQUIRE(ind.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(ind[i].size() == 1);
    CHECK(ind[i].entries()[0].layer == 4 + static_cast<int>(i));
    CHECK(bit_equal(ind[i].entries()[0].ae, sim[0].entries()[i].ae));
  }
}

TEST_CASE("base64 test vectors") {
  CHECK(base64_encode("") == "");
  CHECK(base64_encode("f") == "Zg==");
  CHECK(base64_encode("fo") == "Zm8=");
  CHECK(base64_encode("foo") == "Zm9v");
  CHECK(base64_encode("foobar") == "Zm9vYmFy");
  CHECK(base64_decode("Zm9vYmE=") == "fooba");
  CHECK_THROWS_AS(base64_decode("Zm9"), Error);
  CHECK_THROWS_AS(base64_decode("Zm=v"), Error);
  CHECK_THROWS_AS(base64_decode("Zm9*"), Error);
}

TEST_CASE("spec and plan survive JSON bit-exactly") {
  const auto& m = deep_model();
  const auto spec = temporal_prompt_set(PromptStyle::contrasting_pair, 1960, LayerMode::multi(6));
  CHECK(spec_from_json(spec_to_json(spec)) == spec);
  const auto plan = build_plan(m, spec, LayerMode::multi(6));
  const auto back = plan_from_json(plan_to_json(plan));
  REQUIRE(back.size() == plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    CHECK(back.entries()[i].layer == plan.entries()[i].layer);
    CHECK(bit_equal(back.entries()[i].ae, plan.entries()[i].ae));
  }
  CHECK_THROWS_AS(plan_from_json(R"({"entries":[{"layer":1,"position":2,"ae":{"shape":[1,1],"data_b64":"AAAAAA=="}}]})"),
                  Error);
}
