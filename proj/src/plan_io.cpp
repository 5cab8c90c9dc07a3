// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <bit>
#include <cstring>

#include <json.hpp>

#include "tempsteer/error.hpp"
#include "tempsteer/steering.hpp"

namespace tempsteer::steering {

using nlohmann::json;

namespace {

constexpr std::string_view kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

static_assert(std::endian::native == std::endian::little, "ae payloads are little-endian f32");

json tensor_payload(const Tensor& t) {
  std::string_view raw(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(float));
  return {{"shape", t.shape()}, {"dtype", "f32"}, {"data_b64", base64_encode(raw)}};
}

Tensor tensor_from_payload(const json& j) {
  auto shape = j.at("shape").get<std::vector<std::size_t>>();
  const std::string bytes = base64_decode(j.at("data_b64").get<std::string>());
  if (bytes.size() != shape_numel(shape) * sizeof(float)) {
    throw Error(ErrorKind::shape_mismatch, "ae payload size does not match shape " + shape_to_string(shape));
  }
  std::vector<float> data(shape_numel(shape));
  if (!data.empty()) std::memcpy(data.data(), bytes.data(), bytes.size());
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const auto n = static_cast<unsigned char>(bytes[i]) << 16;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const auto n = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (std::size_t i = 0; i < kAlphabet.size(); ++i) lut[static_cast<unsigned char>(kAlphabet[i])] = static_cast<int>(i);

  if (text.size() % 4 != 0) throw Error(ErrorKind::format, "base64: length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char ch = text[i + k];
      if (ch == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad) throw Error(ErrorKind::format, "base64: data after padding");
      v[k] = lut[static_cast<unsigned char>(ch)];
      if (v[k] < 0) throw Error(ErrorKind::format, "base64: invalid character");
    }
    const unsigned n = (static_cast<unsigned>(v[0]) << 18) | (static_cast<unsigned>(v[1]) << 12) |
                       (static_cast<unsigned>(v[2]) << 6) | static_cast<unsigned>(v[3]);
    out += static_cast<char>((n >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(n & 0xff);
  }
  return out;
}

std::string spec_to_json(const SteeringSpec& spec) {
  json prompts = json::array();
  for (const auto& p : spec.prompts) prompts.push_back({{"text", p.text}, {"coefficient", p.coefficient}});
  json j = {{"style", to_string(spec.style)}, {"year", spec.year}, {"prompts", prompts}};
  return j.dump(2);
}

SteeringSpec spec_from_json(std::string_view text) {
  SteeringSpec spec;
  try {
    const json j = json::parse(text);
    spec.style = parse_style(j.at("style").get<std::string>());
    spec.year = j.at("year").get<int>();
    for (const auto& p : j.at("prompts")) {
      spec.prompts.push_back({p.at("text").get<std::string>(), p.at("coefficient").get<float>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("steering spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string plan_to_json(const engine::InjectionPlan& plan) {
  json entries = json::array();
  for (const auto& e : plan.entries()) {
    entries.push_back({{"layer", e.layer}, {"position", 0}, {"ae", tensor_payload(e.ae)}});
  }
  return json{{"entries", entries}}.dump(2);
}

engine::InjectionPlan plan_from_json(std::string_view text) {
  engine::InjectionPlan plan;
  try {
    const json j = json::parse(text);
    for (const auto& e : j.at("entries")) {
      if (e.value("position", 0) != 0) {
        throw Error(ErrorKind::format, "injection plan: only front position 0 is supported");
      }
      plan.add(e.at("layer").get<int>(), tensor_from_payload(e.at("ae")));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, std::string("injection plan: ") + e.what());
  }
  return plan;
}

}  // namespace tempsteer::steering
