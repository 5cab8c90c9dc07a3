// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include <json.hpp>

#include "support.hpp"
#include "tempsteer/container.hpp"
#include "tempsteer/error.hpp"
#include "tempsteer/model.hpp"

using namespace tempsteer;
using namespace tempsteer::engine;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

ErrorKind load_error_kind(const std::filesystem::path& dir, std::string* message = nullptr) {
  try {
    load_model(dir);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("load_model should have failed");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("save/load round-trip of a 2-layer d_model=64 model") {
  const auto dir = tstest::temp_dir("model-roundtrip");
  auto cfg = tstest::small_config(2, 64);
  const auto original = random_bundle(cfg, Vocab::from_words(tstest::test_words()), 11);
  save_model(original, dir);

  const auto loaded = load_model(dir);
  CHECK(loaded.config().n_layers == 2);
  CHECK(loaded.config().d_model == 64);
  CHECK(loaded.vocab().size() == original.vocab().size());
  for (const auto& [name, t] : original.weights()) CHECK(bit_equal(loaded.weight(name), t));

  // the container file path works as well as its directory
  CHECK(load_model(dir / "model.safetensors").config().n_layers == 2);
}

TEST_CASE("load_model names the missing tensor") {
  const auto dir = tstest::temp_dir("model-missing");
  const auto m = tstest::small_model();
  save_model(m, dir);
  auto weights = m.weights();
  container::TensorMap copy;
  for (const auto& [n, t] : weights) {
    if (n != "block.1.attn.wq") copy.emplace(n, t);
  }
  container::write(dir / "model.safetensors", copy);
  std::string msg;
  CHECK(load_error_kind(dir, &msg) == ErrorKind::missing_tensor);
  CHECK(msg.find("block.1.attn.wq") != std::string::npos);
}

TEST_CASE("load_model reports shape mismatches by name") {
  const auto dir = tstest::temp_dir("model-shape");
  const auto m = tstest::small_model();
  save_model(m, dir);
  auto copy = m.weights();
  copy.at("block.0.mlp.w1") = Tensor({3, 3});
  container::write(dir / "model.safetensors", copy);
  std::string msg;
  CHECK(load_error_kind(dir, &msg) == ErrorKind::shape_mismatch);
  CHECK(msg.find("block.0.mlp.w1") != std::string::npos);
}

TEST_CASE("vocab density is enforced") {
  const std::map<std::string, TokenId> gap{{"<pad>", 0}, {"<bos>", 1}, {"<unk>", 3}};
  CHECK_THROWS_AS(Vocab(gap, 4), Error);
  try {
    Vocab::parse(R"({"<pad>":0,"<bos>":1,"<unk>":2,"x":4})", 5);
    FAIL("expected vocab error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::vocab);
    CHECK(std::string(e.what()).find("missing id 3") != std::string::npos);
  }
  CHECK_THROWS_AS(Vocab::parse(R"({"<pad>":1,"<bos>":0,"<unk>":2})", 3), Error);
  CHECK_THROWS_AS(Vocab::parse(R"({"<pad>":0,"<bos>":1,"<unk>":2,"x":2})", 4), Error);
}

TEST_CASE("vocab gap in a saved model fails to load") {
  const auto dir = tstest::temp_dir("model-vocab-gap");
  save_model(tstest::small_model(), dir);
  std::ifstream in(dir / "vocab.json");
  auto j = nlohmann::json::parse(in);
  j.erase("w3");
  write_text(dir / "vocab.json", j.dump());
  CHECK(load_error_kind(dir) == ErrorKind::vocab);
}

TEST_CASE("config invariants") {
  ModelConfig c = tstest::small_config();
  c.vocab_size = 10;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.d_model = 30;
  bad.n_heads = 4;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.n_layers = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = c;
  bad.max_seq = 16;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(parse_config(R"({"n_layers":2,"d_model":8,"n_heads":2,"d_ff":8,"vocab_size":9,"max_seq":32,"norm":"batch"})"),
                  Error);
  const auto parsed = parse_config(dump_config(c));
  CHECK(parsed.d_model == c.d_model);
  CHECK(parsed.pos_scheme == c.pos_scheme);
}

TEST_CASE("encode/decode") {
  const auto m = tstest::small_model();
  CHECK(decode(m, {}).empty());

  const auto ids = encode(m, "2015");
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == *m.vocab().find("2015"));

  CHECK(encode(m, "zyzzyva") == TokenIds{Vocab::unk_id});
  CHECK(encode(m, "   ").empty());

  const std::string text = "In  1953 ,\tthe\nleader of Aland zyzzyva";
  CHECK(decode(m, encode(m, "In 1953 , the leader of Aland")) == "In 1953 , the leader of Aland");
  CHECK(decode(m, encode(m, text)) == "In 1953 , the leader of Aland <unk>");

  CHECK(encode_with_bos(m, "2015").front() == Vocab::bos_id);
  CHECK(decode(m, encode_with_bos(m, "2015")) == "2015");
  CHECK(decode(m, {-5, 99999}) == "<unk> <unk>");
}

TEST_CASE("vocab round-trips through JSON") {
  const auto v = Vocab::from_words({"a", "b", "a", "c"});
  CHECK(v.size() == 7);
  const auto back = Vocab::parse(v.dump(), v.size());
  for (TokenId i = 0; i < v.size(); ++i) CHECK(back.token(i) == v.token(i));
  CHECK(v.eos_id().has_value());
  CHECK_THROWS_AS(Vocab::from_words({"two words"}), Error);
}
