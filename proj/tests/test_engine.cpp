// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>
#include <thread>

#include "support.hpp"
#include "tempsteer/engine.hpp"
#include "tempsteer/error.hpp"

using namespace tempsteer;
using namespace tempsteer::engine;

namespace {

// Reference path for the cache: rerun the whole sequence each step with the
// plan re-applied to the front positions.
TokenIds generate_by_recompute(const ModelBundle& m, TokenIds tokens, const InjectionPlan* plan, int max_new,
                               const std::set<TokenId>& stop) {
  TokenIds out;
  while (static_cast<int>(out.size()) < max_new) {
    const TokenId next = argmax(prefill(m, tokens, {}, plan).logits);
    if (stop.contains(next)) break;
    out.push_back(next);
    tokens.push_back(next);
    if (tokens.size() > static_cast<std::size_t>(m.config().max_seq)) break;
  }
  return out;
}

InjectionPlan single_entry(int layer, Tensor ae) {
  InjectionPlan p;
  p.add(layer, std::move(ae));
  return p;
}

std::vector<ModelBundle> variants() {
  std::vector<ModelBundle> out;
  out.push_back(tstest::small_model(1));
  auto cfg = tstest::small_config(3, 16);
  cfg.pos_scheme = PosScheme::rotary;
  cfg.norm = NormKind::layernorm;
  out.push_back(random_bundle(cfg, Vocab::from_words(tstest::test_words()), 2));
  return out;
}

}  // namespace

TEST_CASE("no plan matches an all-zero plan bit for bit") {
  std::mt19937_64 rng(5);
  for (const auto& m : variants()) {
    const auto tokens = tstest::random_tokens(rng, m, 12);
    const auto base = prefill(m, tokens);
    const auto d = static_cast<std::size_t>(m.config().d_model);
    InjectionPlan zeros;
    for (int l = 0; l < m.config().n_layers; ++l) zeros.add(l, Tensor::zeros({5, d}));
    CHECK(bit_equal(prefill(m, tokens, {}, &zeros).logits, base.logits));
    auto at_one = single_entry(1, Tensor::zeros({3, d}));
    CHECK(bit_equal(prefill(m, tokens, {}, &at_one).logits, base.logits));
    CHECK(base.logits.all_finite());
  }
}

TEST_CASE("tap 0 is the token embedding plus absolute position") {
  const auto m = tstest::small_model();
  const TokenIds tokens{Vocab::bos_id, 5, 9, 9};
  const auto r = prefill(m, tokens, TapRequest{{0}});
  const Tensor& h = r.tapped.at(0);
  REQUIRE(h.shape() == std::vector<std::size_t>{4, 32});
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    for (std::size_t i = 0; i < 32; ++i) {
      const float want = m.tok_emb().row(static_cast<std::size_t>(tokens[p]))[i] + m.pos_emb()->row(p)[i];
      CHECK(h.row(p)[i] == want);
    }
  }
}

TEST_CASE("tap 0 under rotary is the bare token embedding") {
  const auto all = variants();
  const auto& m = all[1];
  const auto r = prefill(m, {Vocab::bos_id, 7}, TapRequest{{0}});
  CHECK(bit_equal(Tensor({1, 16}, std::vector<float>(m.tok_emb().row(7).begin(), m.tok_emb().row(7).end())),
                  Tensor({1, 16}, std::vector<float>(r.tapped.at(0).row(1).begin(), r.tapped.at(0).row(1).end()))));
}

TEST_CASE("injected layer taps as baseline plus ae") {
  std::mt19937_64 rng(9);
  for (const auto& m : variants()) {
    const auto tokens = tstest::random_tokens(rng, m, 10);
    const auto d = static_cast<std::size_t>(m.config().d_model);
    for (int l = 0; l < m.config().n_layers; ++l) {
      const auto base = prefill(m, tokens, TapRequest{{l}});
      const Tensor ae = tstest::random_tensor(rng, {4, d});
      const auto plan = single_entry(l, ae);
      const auto steered = prefill(m, tokens, TapRequest{{l}}, &plan);
      Tensor want = base.tapped.at(l);
      for (std::size_t p = 0; p < 4; ++p) {
        for (std::size_t i = 0; i < d; ++i) want.row(p)[i] += ae.row(p)[i];
      }
      CHECK(bit_equal(steered.tapped.at(l), want));
      // later positions are untouched at the injection layer
      CHECK(steered.tapped.at(l).row(7)[0] == base.tapped.at(l).row(7)[0]);
    }
  }
}

TEST_CASE("injection is additive in ae") {
  std::mt19937_64 rng(13);
  const auto m = tstest::small_model(3, 3);
  const auto tokens = tstest::random_tokens(rng, m, 9);
  const int layer = 1;
  const Tensor u = tstest::random_tensor(rng, {3, 32}, 0.5f);
  const Tensor v = tstest::random_tensor(rng, {3, 32}, 0.5f);

  const auto combined = single_entry(layer, u + v);
  const auto one_shot = prefill(m, tokens, {}, &combined).logits;

  // u then v at the same point: add u to the tapped input, then v, and feed that
  // as a single full-width replacement delta.
  const auto base = prefill(m, tokens, TapRequest{{layer}});
  Tensor seq = base.tapped.at(layer);
  Tensor delta = Tensor::zeros({seq.dim(0), 32});
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t i = 0; i < 32; ++i) {
      const float x = seq.row(p)[i];
      const float after = (x + u.row(p)[i]) + v.row(p)[i];
      delta.row(p)[i] = after - x;
    }
  }
  const auto sequential = single_entry(layer, delta);
  CHECK(max_abs_diff(prefill(m, tokens, {}, &sequential).logits, one_shot) <= 1e-5f);
}

TEST_CASE("steering moves the logits and can change the greedy token") {
  bool flipped = false;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto m = tstest::small_model(seed);
    const auto prompt = encode_with_bos(m, "In 1953 , the leader of Aland is");
    const auto base = prefill(m, prompt).logits;
    for (int layer = 0; layer < 2; ++layer) {
      const auto steer = prefill(m, encode_with_bos(m, "2015"), TapRequest{{layer}}).tapped.at(layer);
      for (float c : {1.0f, 4.0f, 16.0f}) {
        const auto plan = single_entry(layer, steer * c);
        const auto steered = prefill(m, prompt, {}, &plan).logits;
        CHECK(max_abs_diff(steered, base) > 0.0f);
        CHECK(steered.all_finite());
        flipped = flipped || argmax(steered) != argmax(base);
      }
    }
  }
  CHECK(flipped);
}

TEST_CASE("prefill errors") {
  const auto m = tstest::small_model();
  const auto plan = single_entry(1, Tensor::zeros({5, 32}));
  try {
    prefill(m, {Vocab::bos_id, 4, 5}, {}, &plan);
    FAIL("short prompt accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::prompt_too_short);
  }
  CHECK_THROWS_AS(prefill(m, {}), Error);
  CHECK_THROWS_AS(prefill(m, {Vocab::bos_id}, TapRequest{{2}}), Error);
  CHECK_THROWS_AS(prefill(m, TokenIds(65, 4)), Error);
  CHECK_THROWS_AS(prefill(m, {Vocab::bos_id, 100000}), Error);
  const auto deep = single_entry(2, Tensor::zeros({1, 32}));
  CHECK_THROWS_AS(prefill(m, {Vocab::bos_id, 4}, {}, &deep), Error);
  const auto wide = single_entry(0, Tensor::zeros({1, 16}));
  CHECK_THROWS_AS(prefill(m, {Vocab::bos_id, 4}, {}, &wide), Error);
}

TEST_CASE("plan invariants") {
  InjectionPlan p;
  p.add(1, Tensor::zeros({2, 4}));
  CHECK_THROWS_AS(p.add(1, Tensor::zeros({2, 4})), Error);
  CHECK_THROWS_AS(p.add(0, Tensor::zeros({2, 4})), Error);
  CHECK_THROWS_AS(p.add(3, Tensor::zeros({4})), Error);
  CHECK_THROWS_AS(p.add(3, Tensor::zeros({2, 5})), Error);
  p.add(3, Tensor::zeros({3, 4}));
  CHECK(p.layers() == std::vector<int>{1, 3});
  CHECK(p.max_rows() == 3);
}

TEST_CASE("generate with max_new=1 is the prefill argmax") {
  std::mt19937_64 rng(17);
  const auto m = tstest::small_model();
  for (int i = 0; i < 5; ++i) {
    const auto tokens = tstest::random_tokens(rng, m, 6 + i);
    const auto out = generate(m, tokens, nullptr, {1, {}});
    REQUIRE(out.size() == 1);
    CHECK(out[0] == argmax(prefill(m, tokens).logits));
  }
}

TEST_CASE("cached generation equals full recomputation with reinjection") {
  std::mt19937_64 rng(23);
  for (const auto& m : variants()) {
    const auto d = static_cast<std::size_t>(m.config().d_model);
    for (int i = 0; i < 4; ++i) {
      const auto tokens = tstest::random_tokens(rng, m, 5 + i);
      InjectionPlan plan;
      plan.add(0, tstest::random_tensor(rng, {3, d}, 2.0f));
      plan.add(1, tstest::random_tensor(rng, {2, d}, 2.0f));
      CHECK(generate(m, tokens, &plan, {8, {}}) == generate_by_recompute(m, tokens, &plan, 8, {}));
      CHECK(generate(m, tokens, nullptr, {8, {}}) == generate_by_recompute(m, tokens, nullptr, 8, {}));
    }
  }
}

TEST_CASE("generation stops at stop ids and at the context limit") {
  const auto m = tstest::small_model();
  const TokenIds prompt{Vocab::bos_id, 5, 6};
  const auto free_run = generate(m, prompt, nullptr, {6, {}});
  REQUIRE(free_run.size() == 6);
  const auto stopped = generate(m, prompt, nullptr, {6, {free_run[2]}});
  CHECK(stopped.size() <= 2);

  // the token at position 63 is still predicted, then the context is full
  const auto near_full = generate(m, TokenIds(63, 4), nullptr, {10, {}});
  CHECK(near_full.size() == 2);
  CHECK(near_full == generate_by_recompute(m, TokenIds(63, 4), nullptr, 10, {}));
  CHECK_THROWS_AS(generate(m, prompt, nullptr, {0, {}}), Error);
}

TEST_CASE("outputs do not depend on the calling thread") {
  std::mt19937_64 rng(29);
  const auto m = tstest::small_model();
  const auto tokens = tstest::random_tokens(rng, m, 12);
  const auto plan = single_entry(1, tstest::random_tensor(rng, {4, 32}));
  const auto ref = prefill(m, tokens, TapRequest{{0, 1}}, &plan);
  std::vector<PrefillResult> results(4);
  std::vector<std::thread> pool;
  for (auto& r : results) pool.emplace_back([&] { r = prefill(m, tokens, TapRequest{{0, 1}}, &plan); });
  for (auto& t : pool) t.join();
  for (const auto& r : results) {
    CHECK(bit_equal(r.logits, ref.logits));
    CHECK(bit_equal(r.tapped.at(1), ref.tapped.at(1)));
  }
}

TEST_CASE("decode_step rejects a foreign cache") {
  const auto a = tstest::small_model(1, 2, 32);
  const auto b = tstest::small_model(1, 3, 32);
  auto r = prefill(a, {Vocab::bos_id, 4});
  CHECK_THROWS_AS(decode_step(b, r.cache, 4), Error);
}
