// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include <json.hpp>

#include "tempsteer/error.hpp"

namespace tempsteer::engine {

using nlohmann::json;

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
}

std::string block_name(int layer, const char* suffix) {
  return "block." + std::to_string(layer) + "." + suffix;
}

}  // namespace

// ---------------------------------------------------------------- config

std::string_view to_string(PosScheme p) {
  return p == PosScheme::rotary ? "rotary" : "absolute-learned";
}

std::string_view to_string(NormKind n) { return n == NormKind::layernorm ? "layernorm" : "rmsnorm"; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::config, "model config: " + msg); };
  if (n_layers < 2) fail("n_layers must be >= 2");
  if (d_model <= 0 || n_heads <= 0 || d_ff <= 0) fail("d_model, n_heads and d_ff must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (pos_scheme == PosScheme::rotary && head_dim() % 2 != 0) fail("rotary needs an even head_dim");
  if (vocab_size <= 3) fail("vocab_size must cover the reserved tokens");
  if (max_seq < 32) fail("max_seq must be >= 32");
  if (!(norm_eps > 0.0f)) fail("norm_eps must be positive");
}

ModelConfig parse_config(std::string_view json_text) {
  ModelConfig c;
  try {
    const json j = json::parse(json_text);
    c.n_layers = j.at("n_layers").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    const std::string pos = j.value("pos_scheme", "absolute-learned");
    if (pos == "absolute-learned") c.pos_scheme = PosScheme::absolute_learned;
    else if (pos == "rotary") c.pos_scheme = PosScheme::rotary;
    else throw Error(ErrorKind::config, "model config: unknown pos_scheme '" + pos + "'");
    const std::string norm = j.value("norm", "rmsnorm");
    if (norm == "rmsnorm") c.norm = NormKind::rmsnorm;
    else if (norm == "layernorm") c.norm = NormKind::layernorm;
    else throw Error(ErrorKind::config, "model config: unknown norm '" + norm + "'");
    c.norm_eps = j.value("norm_eps", c.norm_eps);
    c.rope_theta = j.value("rope_theta", c.rope_theta);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string dump_config(const ModelConfig& c) {
  json j = {{"n_layers", c.n_layers},   {"d_model", c.d_model},
            {"n_heads", c.n_heads},     {"d_ff", c.d_ff},
            {"vocab_size", c.vocab_size}, {"max_seq", c.max_seq},
            {"pos_scheme", to_string(c.pos_scheme)}, {"norm", to_string(c.norm)},
            {"norm_eps", c.norm_eps},   {"rope_theta", c.rope_theta}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- vocab

Vocab::Vocab(const std::map<std::string, TokenId>& table, int vocab_size) {
  auto check_reserved = [&](std::string_view tok, TokenId want) {
    auto it = table.find(std::string(tok));
    if (it == table.end() || it->second != want) {
      throw Error(ErrorKind::vocab, "vocab: reserved token " + std::string(tok) + " must have id " +
                                        std::to_string(want));
    }
  };
  check_reserved(pad_token, pad_id);
  check_reserved(bos_token, bos_id);
  check_reserved(unk_token, unk_id);

  if (vocab_size < 0) throw Error(ErrorKind::vocab, "vocab: negative vocab_size");
  tokens_.assign(static_cast<std::size_t>(vocab_size), std::string());
  std::vector<bool> seen(static_cast<std::size_t>(vocab_size), false);
  for (const auto& [tok, id] : table) {
    if (id < 0 || id >= vocab_size) {
      throw Error(ErrorKind::vocab, "vocab: token '" + tok + "' has id " + std::to_string(id) +
                                        " outside [0, " + std::to_string(vocab_size) + ")");
    }
    if (seen[static_cast<std::size_t>(id)]) {
      throw Error(ErrorKind::vocab, "vocab: duplicate id " + std::to_string(id) + " at token '" + tok + "'");
    }
    seen[static_cast<std::size_t>(id)] = true;
    tokens_[static_cast<std::size_t>(id)] = tok;
    ids_.emplace(tok, id);
  }
  for (int id = 0; id < vocab_size; ++id) {
    if (!seen[static_cast<std::size_t>(id)]) {
      throw Error(ErrorKind::vocab, "vocab: ids are not dense, missing id " + std::to_string(id));
    }
  }
}

Vocab Vocab::from_words(const std::vector<std::string>& words) {
  std::map<std::string, TokenId> table{{std::string(pad_token), pad_id},
                                       {std::string(bos_token), bos_id},
                                       {std::string(unk_token), unk_id},
                                       {std::string(eos_token), 3}};
  TokenId next = 4;
  for (const auto& w : words) {
    if (w.empty() || std::any_of(w.begin(), w.end(), [](unsigned char ch) { return std::isspace(ch); })) {
      throw Error(ErrorKind::vocab, "vocab: word '" + w + "' is empty or contains whitespace");
    }
    if (table.emplace(w, next).second) ++next;
  }
  return Vocab(table, next);
}

Vocab Vocab::parse(std::string_view json_text, int vocab_size) {
  std::map<std::string, TokenId> table;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw Error(ErrorKind::vocab, "vocab: expected a JSON object");
    for (const auto& [tok, id] : j.items()) table.emplace(tok, id.get<TokenId>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::vocab, std::string("vocab: ") + e.what());
  }
  return Vocab(table, vocab_size);
}

std::string Vocab::dump() const {
  json j = json::object();
  for (std::size_t id = 0; id < tokens_.size(); ++id) j[tokens_[id]] = id;
  return j.dump(2) + "\n";
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || id >= size()) return tokens_.at(static_cast<std::size_t>(unk_id));
  return tokens_[static_cast<std::size_t>(id)];
}

TokenIds Vocab::encode(std::string_view text) const {
  TokenIds out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(find(text.substr(i, j - i)).value_or(unk_id));
    i = j;
  }
  return out;
}

std::string Vocab::decode(const TokenIds& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == pad_id || id == bos_id) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

// ---------------------------------------------------------------- bundle

std::map<std::string, std::vector<std::size_t>> expected_weight_shapes(const ModelConfig& c) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto ff = static_cast<std::size_t>(c.d_ff);
  const auto v = static_cast<std::size_t>(c.vocab_size);
  const bool ln = c.norm == NormKind::layernorm;

  std::map<std::string, std::vector<std::size_t>> shapes;
  shapes["tok_emb"] = {v, d};
  if (c.pos_scheme == PosScheme::absolute_learned) {
    shapes["pos_emb"] = {static_cast<std::size_t>(c.max_seq), d};
  }
  for (int l = 0; l < c.n_layers; ++l) {
    shapes[block_name(l, "attn_norm.weight")] = {d};
    if (ln) shapes[block_name(l, "attn_norm.bias")] = {d};
    shapes[block_name(l, "attn.wq")] = {d, d};
    shapes[block_name(l, "attn.wk")] = {d, d};
    shapes[block_name(l, "attn.wv")] = {d, d};
    shapes[block_name(l, "attn.wo")] = {d, d};
    shapes[block_name(l, "mlp_norm.weight")] = {d};
    if (ln) shapes[block_name(l, "mlp_norm.bias")] = {d};
    shapes[block_name(l, "mlp.w1")] = {ff, d};
    shapes[block_name(l, "mlp.w2")] = {d, ff};
  }
  shapes["final_norm.weight"] = {d};
  if (ln) shapes["final_norm.bias"] = {d};
  shapes["lm_head"] = {v, d};
  return shapes;
}

ModelBundle::ModelBundle(ModelConfig config, container::TensorMap weights, Vocab vocab)
    : config_(config), weights_(std::move(weights)), vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.size() != config_.vocab_size) {
    throw Error(ErrorKind::vocab, "vocab has " + std::to_string(vocab_.size()) +
                                      " tokens but config.vocab_size is " +
                                      std::to_string(config_.vocab_size));
  }
  for (const auto& [name, shape] : expected_weight_shapes(config_)) {
    auto it = weights_.find(name);
    if (it == weights_.end()) {
      throw Error(ErrorKind::missing_tensor, "missing tensor '" + name + "'");
    }
    if (it->second.shape() != shape) {
      throw Error(ErrorKind::shape_mismatch, "tensor '" + name + "' has shape " +
                                                 shape_to_string(it->second.shape()) + ", expected " +
                                                 shape_to_string(shape));
    }
    if (!it->second.all_finite()) {
      throw Error(ErrorKind::format, "tensor '" + name + "' contains non-finite values");
    }
  }
  bind();
}

void ModelBundle::bind() {
  auto get = [this](const std::string& n) { return &weights_.at(n); };
  auto opt = [this](const std::string& n) -> const Tensor* {
    auto it = weights_.find(n);
    return it == weights_.end() ? nullptr : &it->second;
  };
  const bool ln = config_.norm == NormKind::layernorm;
  tok_emb_ = get("tok_emb");
  pos_emb_ = config_.pos_scheme == PosScheme::absolute_learned ? get("pos_emb") : nullptr;
  final_norm_w_ = get("final_norm.weight");
  final_norm_b_ = ln ? get("final_norm.bias") : nullptr;
  lm_head_ = get("lm_head");
  blocks_.clear();
  for (int l = 0; l < config_.n_layers; ++l) {
    BlockWeights b;
    b.attn_norm_w = get(block_name(l, "attn_norm.weight"));
    b.attn_norm_b = ln ? opt(block_name(l, "attn_norm.bias")) : nullptr;
    b.wq = get(block_name(l, "attn.wq"));
    b.wk = get(block_name(l, "attn.wk"));
    b.wv = get(block_name(l, "attn.wv"));
    b.wo = get(block_name(l, "attn.wo"));
    b.mlp_norm_w = get(block_name(l, "mlp_norm.weight"));
    b.mlp_norm_b = ln ? opt(block_name(l, "mlp_norm.bias")) : nullptr;
    b.w1 = get(block_name(l, "mlp.w1"));
    b.w2 = get(block_name(l, "mlp.w2"));
    blocks_.push_back(b);
  }
}

const Tensor& ModelBundle::weight(const std::string& name) const {
  auto it = weights_.find(name);
  if (it == weights_.end()) throw Error(ErrorKind::missing_tensor, "missing tensor '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------- io

ModelPaths resolve_model_paths(const std::filesystem::path& container_path) {
  ModelPaths p;
  p.weights = std::filesystem::is_directory(container_path) ? container_path / "model.safetensors"
                                                            : container_path;
  const auto dir = p.weights.parent_path();
  p.config = dir / "config.json";
  p.vocab = dir / "vocab.json";
  return p;
}

ModelBundle load_model(const std::filesystem::path& container_path) {
  const ModelPaths paths = resolve_model_paths(container_path);
  if (!std::filesystem::exists(paths.weights)) {
    throw Error(ErrorKind::io, "model container not found: " + paths.weights.string());
  }
  ModelConfig config = parse_config(read_text(paths.config));
  Vocab vocab = Vocab::parse(read_text(paths.vocab), config.vocab_size);
  return ModelBundle(config, container::read(paths.weights), std::move(vocab));
}

void save_model(const ModelBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
  container::write(dir / "model.safetensors", bundle.weights());
  write_text(dir / "config.json", dump_config(bundle.config()));
  write_text(dir / "vocab.json", bundle.vocab().dump());
}

ModelBundle random_bundle(ModelConfig config, Vocab vocab, std::uint64_t seed) {
  config.vocab_size = vocab.size();
  config.validate();
  std::mt19937_64 rng(seed);
  container::TensorMap weights;
  for (const auto& [name, shape] : expected_weight_shapes(config)) {
    Tensor t(shape);
    const bool is_norm_w = name.ends_with("norm.weight");
    const bool is_bias = name.ends_with(".bias");
    if (is_norm_w) {
      for (float& v : t.data()) v = 1.0f;
    } else if (!is_bias) {
      // embeddings ~ N(0, 1); [out, in] projections ~ N(0, 1/in)
      const bool is_linear = shape.size() == 2 && name != "tok_emb" && name != "pos_emb";
      const double stddev = is_linear ? 1.0 / std::sqrt(static_cast<double>(shape[1])) : 1.0;
      std::normal_distribution<double> dist(0.0, stddev);
      for (float& v : t.data()) v = static_cast<float>(dist(rng));
    }
    weights.emplace(name, std::move(t));
  }
  return ModelBundle(config, std::move(weights), std::move(vocab));
}

TokenIds encode(const ModelBundle& bundle, std::string_view text) { return bundle.vocab().encode(text); }

std::string decode(const ModelBundle& bundle, const TokenIds& ids) { return bundle.vocab().decode(ids); }

TokenIds encode_with_bos(const ModelBundle& bundle, std::string_view text) {
  TokenIds ids{Vocab::bos_id};
  const TokenIds body = bundle.vocab().encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

}  // namespace tempsteer::engine
