// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "tempsteer/tensor.hpp"

namespace tempsteer::container {

using TensorMap = std::map<std::string, Tensor>;

// Flat tensor container: u64 little-endian header length, UTF-8 JSON header,
// then raw little-endian f32 payloads. Written in safetensors layout
// ({"dtype":"F32","shape":[..],"data_offsets":[begin,end]}); the reader also
// accepts {"dtype":"f32","shape":[..],"offset":o,"length":n} entries.
TensorMap read(const std::filesystem::path& path);
TensorMap parse(std::string_view bytes, const std::string& origin = "<memory>");

void write(const std::filesystem::path& path, const TensorMap& tensors);
std::string serialize(const TensorMap& tensors);

}  // namespace tempsteer::container
