/*
 * Copyright 2026 The MVOL Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Binary artifact formats, JSON helpers and atomic file output.
//
// All binary integers and doubles are little-endian.
//
// Dataset dump ("MVDM1"):
//   header   magic[5] u32 k  u32 d  u32 P  u64 count  u64 seed  f64 alpha
//   sample   u8 kind  u16 label (0xFFFF absent)  u8 picked_view (0xFF absent)
//            u32 n_features, then per feature:
//              u32 index  u32 n_patches  u32 patch[n]  f64 coeff[n]
//            f64 X[d * P] column-major
// The sidecar "<path>.json" mirrors the header and carries the GenConfig.
//
// Dictionary ("MVFD1"): u32 k  u32 d  f64 v[2k * d] row per feature.
// Checkpoint ("MVNT1"): u32 k  u32 m  u32 d  u32 q  f64 lambda  f64 sigma0
//                       f64 w[k * m * d] row-major over (i, r, coordinate).

#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mvol/datagen.hpp"
#include "mvol/network.hpp"

namespace mvol {

// Shortest decimal that parses back to the same double.
std::string format_double(double x);
std::string hex64(std::uint64_t x);

// Writes to a sibling temporary file and renames it over `path`. Creates
// missing parent directories. Throws IoError.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
// FNV-1a of the file contents, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v);
  void raw(std::string_view s) { bytes_.append(s); }
  const std::string& bytes() const { return bytes_; }

 private:
  void put(std::uint64_t v, int width);
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64();
  // Throws IoError unless the next bytes equal `magic`.
  void expect(std::string_view magic);
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t get(int width);
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string encode_dataset(const Dataset& data);
// The binary dump alone carries no GenConfig; it is taken from `gen`, whose
// k, d and P must match the header.
Dataset decode_dataset(std::string_view bytes, const GenConfig& gen);
nlohmann::json dataset_sidecar(const Dataset& data);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
// Reads "<path>" and "<path>.json". Throws IoError when they disagree.
Dataset load_dataset(const std::filesystem::path& path);

std::string encode_dictionary(const FeatureDictionary& dict);
FeatureDictionary decode_dictionary(std::string_view bytes);
void save_dictionary(const FeatureDictionary& dict,
                     const std::filesystem::path& path);
FeatureDictionary load_dictionary(const std::filesystem::path& path);

std::string encode_network(const Network& net);
Network decode_network(std::string_view bytes);
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

// Reads an object's members and rejects unknown keys, so typos in config
// files fail loudly. `where` prefixes error messages.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string where);

  bool has(const std::string& key) const { return j_.contains(key); }
  const nlohmann::json& at(const std::string& key);

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(key, e.what());
    }
  }

  // Throws ConfigError naming every key that was never read.
  void finish() const;

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& why) const;

  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

nlohmann::json to_json(const Interval& iv);
nlohmann::json to_json(const GenConfig& cfg);
// Unspecified fields take GenConfig::defaults(k, d, P) values.
GenConfig gen_config_from_json(const nlohmann::json& j);

nlohmann::json parse_json(std::string_view text, const std::string& where);

}  // namespace mvol
