// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tempsteer/model.hpp"

namespace tstest {

namespace eng = tempsteer::engine;

inline std::vector<std::string> test_words() {
  std::vector<std::string> w{"the", "year", "is", "recent", "current", "leader", "of", "Aland", "Borna",
                             "who", "?", "A:", ".", ",", "as", "In"};
  for (int i = 0; i < 24; ++i) w.push_back("w" + std::to_string(i));
  for (int y = 1945; y <= 2025; ++y) w.push_back(std::to_string(y));
  return w;
}

inline eng::ModelConfig small_config(int n_layers = 2, int d_model = 32) {
  eng::ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = d_model;
  c.n_heads = 4;
  c.d_ff = 2 * d_model;
  c.max_seq = 64;
  return c;
}

inline eng::ModelBundle small_model(std::uint64_t seed = 7, int n_layers = 2, int d_model = 32) {
  return eng::random_bundle(small_config(n_layers, d_model), eng::Vocab::from_words(test_words()), seed);
}

inline eng::TokenIds random_tokens(std::mt19937_64& rng, const eng::ModelBundle& m, std::size_t n) {
  std::uniform_int_distribution<int> dist(4, m.config().vocab_size - 1);
  eng::TokenIds ids{eng::Vocab::bos_id};
  while (ids.size() < n) ids.push_back(dist(rng));
  return ids;
}

inline tempsteer::Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape, float scale = 1.0f) {
  tempsteer::Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, scale);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tempsteer-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace tstest
