// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/engine.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "tempsteer/error.hpp"

namespace tempsteer::engine {

// ---------------------------------------------------------------- plan

InjectionPlan::InjectionPlan(std::vector<InjectionEntry> entries) {
  for (auto& e : entries) add(e.layer, std::move(e.ae));
}

void InjectionPlan::add(int layer, Tensor ae) {
  if (!entries_.empty() && layer <= entries_.back().layer) {
    throw Error(ErrorKind::invalid_argument, "injection plan layers must be strictly increasing (got " +
                                                 std::to_string(layer) + " after " +
                                                 std::to_string(entries_.back().layer) + ")");
  }
  if (layer < 0) throw Error(ErrorKind::out_of_range, "injection plan layer " + std::to_string(layer));
  if (ae.rank() != 2 || ae.dim(0) == 0) {
    throw Error(ErrorKind::shape_mismatch, "injection ae must be a non-empty [mtl x d_model] matrix, got " +
                                               shape_to_string(ae.shape()));
  }
  if (!entries_.empty() && ae.dim(1) != entries_.front().ae.dim(1)) {
    throw Error(ErrorKind::shape_mismatch, "injection ae widths differ across layers");
  }
  entries_.push_back({layer, std::move(ae)});
}

const InjectionEntry* InjectionPlan::find(int layer) const {
  for (const auto& e : entries_) {
    if (e.layer == layer) return &e;
  }
  return nullptr;
}

std::vector<int> InjectionPlan::layers() const {
  std::vector<int> out;
  for (const auto& e : entries_) out.push_back(e.layer);
  return out;
}

std::size_t InjectionPlan::max_rows() const {
  std::size_t m = 0;
  for (const auto& e : entries_) m = std::max(m, e.ae.dim(0));
  return m;
}

// ---------------------------------------------------------------- kernels

namespace {

using Vec = std::vector<float>;

// y = W x for W [out x in]; sequential accumulation keeps every call path bit-identical.
void matvec(const Tensor& w, std::span<const float> x, std::span<float> y) {
  const std::size_t out = w.dim(0), in = w.dim(1);
  const float* wp = w.data().data();
  for (std::size_t i = 0; i < out; ++i) {
    const float* row = wp + i * in;
    float acc = 0.0f;
    for (std::size_t j = 0; j < in; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

void normalize(const ModelConfig& cfg, std::span<const float> x, const Tensor& w, const Tensor* b,
               std::span<float> y) {
  const std::size_t d = x.size();
  if (cfg.norm == NormKind::rmsnorm) {
    float ss = 0.0f;
    for (float v : x) ss += v * v;
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(d) + cfg.norm_eps);
    for (std::size_t i = 0; i < d; ++i) y[i] = x[i] * inv * w[i];
  } else {
    float mean = 0.0f;
    for (float v : x) mean += v;
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (float v : x) var += (v - mean) * (v - mean);
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + cfg.norm_eps);
    for (std::size_t i = 0; i < d; ++i) y[i] = (x[i] - mean) * inv * w[i] + (b ? (*b)[i] : 0.0f);
  }
}

float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }

// Rotate-half rotary embedding applied per head.
void apply_rotary(const ModelConfig& cfg, std::span<float> v, std::size_t pos) {
  const int hd = cfg.head_dim();
  const int half = hd / 2;
  for (int h = 0; h < cfg.n_heads; ++h) {
    float* base = v.data() + static_cast<std::size_t>(h * hd);
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(static_cast<double>(cfg.rope_theta), -2.0 * i / hd);
      const double angle = static_cast<double>(pos) * freq;
      const float c = static_cast<float>(std::cos(angle));
      const float s = static_cast<float>(std::sin(angle));
      const float x1 = base[i], x2 = base[i + half];
      base[i] = x1 * c - x2 * s;
      base[i + half] = x2 * c + x1 * s;
    }
  }
}

KvCache make_cache(const ModelConfig& cfg) {
  KvCache c;
  c.d_model = cfg.d_model;
  const auto n = static_cast<std::size_t>(cfg.max_seq) * static_cast<std::size_t>(cfg.d_model);
  c.keys.assign(static_cast<std::size_t>(cfg.n_layers), Vec(n, 0.0f));
  c.values.assign(static_cast<std::size_t>(cfg.n_layers), Vec(n, 0.0f));
  return c;
}

struct Scratch {
  Vec h, q, attn, proj, ff, scores;
  explicit Scratch(const ModelConfig& cfg)
      : h(cfg.d_model), q(cfg.d_model), attn(cfg.d_model), proj(cfg.d_model), ff(cfg.d_ff),
        scores(static_cast<std::size_t>(cfg.max_seq)) {}
};

// Writes K/V for `pos` from residual `x` into the layer's cache slots.
void project_kv(const ModelBundle& m, int layer, std::span<const float> x, std::size_t pos, KvCache& cache,
                Scratch& s) {
  const ModelConfig& cfg = m.config();
  const BlockWeights& b = m.block(layer);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  normalize(cfg, x, *b.attn_norm_w, b.attn_norm_b, s.h);
  std::span<float> k(cache.keys[static_cast<std::size_t>(layer)].data() + pos * d, d);
  std::span<float> v(cache.values[static_cast<std::size_t>(layer)].data() + pos * d, d);
  matvec(*b.wk, s.h, k);
  matvec(*b.wv, s.h, v);
  if (cfg.pos_scheme == PosScheme::rotary) apply_rotary(cfg, k, pos);
}

// Completes block `layer` for the row at `pos`, whose K/V are already cached
// along with every earlier position. Updates x in place.
void finish_block(const ModelBundle& m, int layer, std::span<float> x, std::size_t pos, const KvCache& cache,
                  Scratch& s) {
  const ModelConfig& cfg = m.config();
  const BlockWeights& b = m.block(layer);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto hd = static_cast<std::size_t>(cfg.head_dim());
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  normalize(cfg, x, *b.attn_norm_w, b.attn_norm_b, s.h);
  matvec(*b.wq, s.h, s.q);
  if (cfg.pos_scheme == PosScheme::rotary) apply_rotary(cfg, s.q, pos);

  const float* keys = cache.keys[static_cast<std::size_t>(layer)].data();
  const float* values = cache.values[static_cast<std::size_t>(layer)].data();
  for (std::size_t h = 0; h < static_cast<std::size_t>(cfg.n_heads); ++h) {
    const std::size_t off = h * hd;
    float mx = -INFINITY;
    for (std::size_t t = 0; t <= pos; ++t) {
      float dot = 0.0f;
      for (std::size_t i = 0; i < hd; ++i) dot += s.q[off + i] * keys[t * d + off + i];
      s.scores[t] = dot * scale;
      mx = std::max(mx, s.scores[t]);
    }
    float denom = 0.0f;
    for (std::size_t t = 0; t <= pos; ++t) {
      s.scores[t] = std::exp(s.scores[t] - mx);
      denom += s.scores[t];
    }
    for (std::size_t i = 0; i < hd; ++i) s.attn[off + i] = 0.0f;
    for (std::size_t t = 0; t <= pos; ++t) {
      const float p = s.scores[t] / denom;
      for (std::size_t i = 0; i < hd; ++i) s.attn[off + i] += p * values[t * d + off + i];
    }
  }
  matvec(*b.wo, s.attn, s.proj);
  for (std::size_t i = 0; i < d; ++i) x[i] += s.proj[i];

  normalize(cfg, x, *b.mlp_norm_w, b.mlp_norm_b, s.h);
  matvec(*b.w1, s.h, s.ff);
  for (float& v : s.ff) v = gelu(v);
  matvec(*b.w2, s.ff, s.proj);
  for (std::size_t i = 0; i < d; ++i) x[i] += s.proj[i];
}

void embed(const ModelBundle& m, TokenId token, std::size_t pos, std::span<float> x) {
  const auto tok = m.tok_emb().row(static_cast<std::size_t>(token));
  std::copy(tok.begin(), tok.end(), x.begin());
  if (const Tensor* pe = m.pos_emb()) {
    const auto p = pe->row(pos);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += p[i];
  }
}

Tensor head_logits(const ModelBundle& m, std::span<const float> x, Scratch& s) {
  normalize(m.config(), x, m.final_norm_w(), m.final_norm_b(), s.h);
  Tensor logits({static_cast<std::size_t>(m.config().vocab_size)});
  matvec(m.lm_head(), s.h, logits.data());
  return logits;
}

void check_token(const ModelBundle& m, TokenId t) {
  if (t < 0 || t >= m.config().vocab_size) {
    throw Error(ErrorKind::out_of_range, "token id " + std::to_string(t) + " outside vocabulary");
  }
}

}  // namespace

// ---------------------------------------------------------------- forward

PrefillResult prefill(const ModelBundle& bundle, const TokenIds& tokens, const TapRequest& taps,
                      const InjectionPlan* plan) {
  const ModelConfig& cfg = bundle.config();
  const std::size_t n = tokens.size();
  if (n == 0) throw Error(ErrorKind::invalid_argument, "prefill: empty token sequence");
  if (n > static_cast<std::size_t>(cfg.max_seq)) {
    throw Error(ErrorKind::out_of_range, "prefill: " + std::to_string(n) + " tokens exceed max_seq " +
                                             std::to_string(cfg.max_seq));
  }
  for (int l : taps.layers) {
    if (l < 0 || l >= cfg.n_layers) {
      throw Error(ErrorKind::out_of_range, "tap layer " + std::to_string(l) + " outside [0, " +
                                               std::to_string(cfg.n_layers) + ")");
    }
  }
  if (plan) {
    for (const auto& e : plan->entries()) {
      if (e.layer >= cfg.n_layers) {
        throw Error(ErrorKind::out_of_range, "injection layer " + std::to_string(e.layer) + " outside [0, " +
                                                 std::to_string(cfg.n_layers) + ")");
      }
      if (e.ae.dim(1) != static_cast<std::size_t>(cfg.d_model)) {
        throw Error(ErrorKind::shape_mismatch, "injection ae at layer " + std::to_string(e.layer) +
                                                   " has width " + std::to_string(e.ae.dim(1)) +
                                                   ", model d_model is " + std::to_string(cfg.d_model));
      }
      if (e.ae.dim(0) > n) {
        throw Error(ErrorKind::prompt_too_short,
                    "prompt has " + std::to_string(n) + " tokens but the steering vector at layer " +
                        std::to_string(e.layer) + " spans " + std::to_string(e.ae.dim(0)) + " positions");
      }
    }
  }
  for (TokenId t : tokens) check_token(bundle, t);

  const auto d = static_cast<std::size_t>(cfg.d_model);
  PrefillResult out;
  out.cache = make_cache(cfg);
  Scratch s(cfg);

  Tensor x({n, d});
  for (std::size_t p = 0; p < n; ++p) embed(bundle, tokens[p], p, x.row(p));

  for (int l = 0; l < cfg.n_layers; ++l) {
    if (const InjectionEntry* e = plan ? plan->find(l) : nullptr) {
      const std::size_t rows = e->ae.dim(0);
      for (std::size_t p = 0; p < rows; ++p) {
        auto xr = x.row(p);
        auto ar = e->ae.row(p);
        for (std::size_t i = 0; i < d; ++i) xr[i] += ar[i];
      }
    }
    if (taps.layers.contains(l)) out.tapped.emplace(l, x);
    for (std::size_t p = 0; p < n; ++p) project_kv(bundle, l, x.row(p), p, out.cache, s);
    for (std::size_t p = 0; p < n; ++p) finish_block(bundle, l, x.row(p), p, out.cache, s);
  }
  out.cache.length = n;
  out.logits = head_logits(bundle, x.row(n - 1), s);
  return out;
}

Tensor decode_step(const ModelBundle& bundle, KvCache& cache, TokenId token) {
  const ModelConfig& cfg = bundle.config();
  if (cache.length >= static_cast<std::size_t>(cfg.max_seq)) {
    throw Error(ErrorKind::out_of_range, "decode_step: context is full (max_seq " +
                                             std::to_string(cfg.max_seq) + ")");
  }
  if (cache.d_model != cfg.d_model || cache.keys.size() != static_cast<std::size_t>(cfg.n_layers)) {
    throw Error(ErrorKind::invalid_argument, "decode_step: cache does not belong to this model");
  }
  check_token(bundle, token);
  const std::size_t pos = cache.length;
  Scratch s(cfg);
  Vec x(static_cast<std::size_t>(cfg.d_model));
  embed(bundle, token, pos, x);
  for (int l = 0; l < cfg.n_layers; ++l) {
    project_kv(bundle, l, x, pos, cache, s);
    finish_block(bundle, l, x, pos, cache, s);
  }
  cache.length = pos + 1;
  return head_logits(bundle, x, s);
}

TokenId argmax(const Tensor& logits) {
  if (logits.empty()) throw Error(ErrorKind::invalid_argument, "argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

std::set<TokenId> default_stop_ids(const ModelBundle& bundle) {
  std::set<TokenId> ids;
  if (auto eos = bundle.vocab().eos_id()) ids.insert(*eos);
  return ids;
}

TokenIds generate(const ModelBundle& bundle, const TokenIds& tokens, const InjectionPlan* plan,
                  const GenerateOptions& options) {
  if (options.max_new < 1) throw Error(ErrorKind::invalid_argument, "generate: max_new must be >= 1");
  PrefillResult state = prefill(bundle, tokens, {}, plan);
  TokenIds out;
  Tensor logits = std::move(state.logits);
  const auto max_seq = static_cast<std::size_t>(bundle.config().max_seq);
  while (true) {
    const TokenId next = argmax(logits);
    if (options.stop_ids.contains(next)) break;
    out.push_back(next);
    if (static_cast<int>(out.size()) >= options.max_new || state.cache.length >= max_seq) break;
    logits = decode_step(bundle, state.cache, next);
  }
  return out;
}

}  // namespace tempsteer::engine
