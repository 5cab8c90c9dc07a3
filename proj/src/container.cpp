// SPDX-License-Identifier: Apache-2.0
#include "tempsteer/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "tempsteer/error.hpp"

namespace tempsteer::container {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "container payloads are little-endian f32; big-endian hosts need byte swapping");

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::uint64_t read_u64_le(std::string_view bytes) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[i]);
  return v;
}

void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

TensorMap parse(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 8) throw Error(ErrorKind::format, origin + ": truncated header length");
  const std::uint64_t header_len = read_u64_le(bytes);
  if (header_len > bytes.size() - 8) {
    throw Error(ErrorKind::format, origin + ": header length exceeds file size");
  }
  json header;
  try {
    header = json::parse(bytes.substr(8, header_len));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, origin + ": header is not valid JSON: " + e.what());
  }
  if (!header.is_object()) throw Error(ErrorKind::format, origin + ": header must be an object");

  const std::string_view payload = bytes.substr(8 + header_len);
  TensorMap out;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") continue;
    try {
      const std::string dtype = entry.at("dtype").get<std::string>();
      if (dtype != "F32" && dtype != "f32") {
        throw Error(ErrorKind::format, origin + ": tensor '" + name + "' has unsupported dtype " + dtype);
      }
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      std::uint64_t begin = 0, length = 0;
      if (entry.contains("data_offsets")) {
        auto off = entry.at("data_offsets").get<std::vector<std::uint64_t>>();
        if (off.size() != 2 || off[1] < off[0]) {
          throw Error(ErrorKind::format, origin + ": tensor '" + name + "' has bad data_offsets");
        }
        begin = off[0];
        length = off[1] - off[0];
      } else {
        begin = entry.at("offset").get<std::uint64_t>();
        length = entry.at("length").get<std::uint64_t>();
      }
      const std::size_t numel = shape_numel(shape);
      if (length != numel * sizeof(float)) {
        throw Error(ErrorKind::shape_mismatch, origin + ": tensor '" + name + "' byte length " +
                                                   std::to_string(length) + " does not match shape " +
                                                   shape_to_string(shape));
      }
      if (begin > payload.size() || length > payload.size() - begin) {
        throw Error(ErrorKind::format, origin + ": tensor '" + name + "' payload out of bounds");
      }
      std::vector<float> data(numel);
      if (numel) std::memcpy(data.data(), payload.data() + begin, length);
      out.emplace(name, Tensor(std::move(shape), std::move(data)));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::format, origin + ": malformed entry for tensor '" + name + "': " + e.what());
    }
  }
  return out;
}

TensorMap read(const std::filesystem::path& path) {
  return parse(read_file(path), path.string());
}

std::string serialize(const TensorMap& tensors) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    const std::uint64_t len = t.size() * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t.shape()}, {"data_offsets", {offset, offset + len}}};
    offset += len;
  }
  std::string head = header.dump();
  // safetensors pads the header with spaces to an 8-byte boundary
  while (head.size() % 8) head.push_back(' ');

  std::string out;
  out.reserve(8 + head.size() + offset);
  append_u64_le(out, head.size());
  out += head;
  for (const auto& [name, t] : tensors) {
    if (t.empty()) continue;
    out.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(float));
  }
  return out;
}

void write(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  const std::string bytes = serialize(tensors);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace tempsteer::container
