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

#include "mvol/io.hpp"

#include <unistd.h>

#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mvol/errors.hpp"
#include "mvol/rng.hpp"

namespace mvol {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  static std::atomic<std::uint64_t> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " +
                    path.parent_path().string() + ": " + ec.message());
    }
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return os.str();
}

std::string file_checksum(const fs::path& path) {
  const std::string bytes = read_file(path);
  return hex64(fnv1a64(std::string_view(bytes)));
}

void ByteWriter::put(std::uint64_t v, int width) {
  for (int b = 0; b < width; ++b) {
    bytes_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  }
}

void ByteWriter::f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

std::uint64_t ByteReader::get(int width) {
  if (pos_ + width > bytes_.size()) throw IoError("truncated binary data");
  std::uint64_t v = 0;
  for (int b = 0; b < width; ++b) {
    v |= static_cast<std::uint64_t>(
             static_cast<unsigned char>(bytes_[pos_ + b]))
         << (8 * b);
  }
  pos_ += width;
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(get(8)); }

void ByteReader::expect(std::string_view magic) {
  if (bytes_.substr(pos_, magic.size()) != magic) {
    throw IoError("bad magic, expected " + std::string(magic));
  }
  pos_ += magic.size();
}

namespace {

inline constexpr std::uint16_t kNoLabel = 0xFFFF;
inline constexpr std::uint8_t kNoView = 0xFF;

}  // namespace

std::string encode_dataset(const Dataset& data) {
  const auto& g = data.gen_config;
  ByteWriter w;
  w.raw("MVDM1");
  w.u32(g.k);
  w.u32(g.d);
  w.u32(g.P);
  w.u64(data.size());
  w.u64(data.seed);
  w.f64(data.alpha);
  for (const auto& s : data.samples) {
    if (s.X.d() != g.d || s.X.patches() != g.P) {
      throw ShapeMismatch("encode_dataset: sample shape differs from header");
    }
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.u16(s.label ? static_cast<std::uint16_t>(*s.label) : kNoLabel);
    w.u8(s.picked_view ? static_cast<std::uint8_t>(*s.picked_view) : kNoView);
    w.u32(static_cast<std::uint32_t>(s.features.size()));
    for (const auto& f : s.features) {
      w.u32(f.feature);
      w.u32(static_cast<std::uint32_t>(f.patches.size()));
      for (int p : f.patches) w.u32(p);
      for (double z : f.coeffs) w.f64(z);
    }
    for (double x : s.X.data()) w.f64(x);
  }
  return w.bytes();
}

Dataset decode_dataset(std::string_view bytes, const GenConfig& gen) {
  ByteReader r(bytes);
  r.expect("MVDM1");
  const int k = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  const int P = static_cast<int>(r.u32());
  if (k != gen.k || d != gen.d || P != gen.P) {
    throw IoError("dataset header (k, d, P) disagrees with its GenConfig");
  }
  Dataset data;
  data.gen_config = gen;
  const std::uint64_t count = r.u64();
  data.seed = r.u64();
  data.alpha = r.f64();
  data.samples.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    Sample s;
    const auto kind = r.u8();
    if (kind > 2) throw IoError("bad sample kind");
    s.kind = static_cast<SampleKind>(kind);
    const auto label = r.u16();
    if (label != kNoLabel) s.label = label;
    const auto view = r.u8();
    if (view != kNoView) s.picked_view = view;
    const auto n_feat = r.u32();
    for (std::uint32_t f = 0; f < n_feat; ++f) {
      FeatureUse use;
      use.feature = static_cast<int>(r.u32());
      const auto n_patch = r.u32();
      if (n_patch > static_cast<std::uint32_t>(P)) throw IoError("bad patch count");
      for (std::uint32_t p = 0; p < n_patch; ++p) {
        use.patches.push_back(static_cast<int>(r.u32()));
      }
      for (std::uint32_t p = 0; p < n_patch; ++p) use.coeffs.push_back(r.f64());
      s.features.push_back(std::move(use));
    }
    std::vector<double> x(static_cast<std::size_t>(d) * P);
    for (auto& v : x) v = r.f64();
    s.X = PatchMatrix(d, P, std::move(x));
    data.samples.push_back(std::move(s));
  }
  if (!r.at_end()) throw IoError("trailing bytes after dataset");
  return data;
}

json dataset_sidecar(const Dataset& data) {
  return {{"format", "MVDM1"},
          {"k", data.gen_config.k},
          {"d", data.gen_config.d},
          {"P", data.gen_config.P},
          {"count", data.size()},
          {"seed", data.seed},
          {"alpha", data.alpha},
          {"gen_config", to_json(data.gen_config)}};
}

void save_dataset(const Dataset& data, const fs::path& path) {
  write_file_atomic(path, encode_dataset(data));
  fs::path side = path;
  side += ".json";
  write_file_atomic(side, dataset_sidecar(data).dump(2) + "\n");
}

Dataset load_dataset(const fs::path& path) {
  fs::path side = path;
  side += ".json";
  const json meta = parse_json(read_file(side), side.string());
  GenConfig gen;
  try {
    gen = gen_config_from_json(meta.at("gen_config"));
  } catch (const json::exception& e) {
    throw IoError("sidecar " + side.string() + ": " + e.what());
  }
  Dataset data = decode_dataset(read_file(path), gen);
  try {
    if (meta.at("k").get<int>() != gen.k || meta.at("d").get<int>() != gen.d ||
        meta.at("P").get<int>() != gen.P ||
        meta.at("count").get<std::uint64_t>() != data.size() ||
        meta.at("seed").get<std::uint64_t>() != data.seed) {
      throw IoError("sidecar disagrees with " + path.string());
    }
  } catch (const json::exception& e) {
    throw IoError("sidecar " + side.string() + ": " + e.what());
  }
  return data;
}

std::string encode_dictionary(const FeatureDictionary& dict) {
  ByteWriter w;
  w.raw("MVFD1");
  w.u32(dict.k());
  w.u32(dict.d());
  for (double v : dict.data()) w.f64(v);
  return w.bytes();
}

FeatureDictionary decode_dictionary(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect("MVFD1");
  const int k = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  std::vector<double> v(static_cast<std::size_t>(2 * k) * d);
  for (auto& x : v) x = r.f64();
  if (!r.at_end()) throw IoError("trailing bytes after dictionary");
  return FeatureDictionary(k, d, std::move(v));
}

void save_dictionary(const FeatureDictionary& dict, const fs::path& path) {
  write_file_atomic(path, encode_dictionary(dict));
}

FeatureDictionary load_dictionary(const fs::path& path) {
  return decode_dictionary(read_file(path));
}

std::string encode_network(const Network& net) {
  ByteWriter w;
  w.raw("MVNT1");
  w.u32(net.k());
  w.u32(net.m());
  w.u32(net.d());
  w.u32(net.act().q);
  w.f64(net.act().lambda);
  w.f64(net.sigma0());
  for (double x : net.weights()) w.f64(x);
  return w.bytes();
}

Network decode_network(std::string_view bytes) {
  ByteReader r(bytes);
  r.expect("MVNT1");
  const int k = static_cast<int>(r.u32());
  const int m = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  ActivationParams act;
  act.q = static_cast<int>(r.u32());
  act.lambda = r.f64();
  const double sigma0 = r.f64();
  Network net(k, m, d, act, sigma0);
  for (auto& x : net.weights()) x = r.f64();
  if (!r.at_end()) throw IoError("trailing bytes after checkpoint");
  return net;
}

void save_network(const Network& net, const fs::path& path) {
  write_file_atomic(path, encode_network(net));
}

Network load_network(const fs::path& path) {
  return decode_network(read_file(path));
}

StrictObject::StrictObject(const json& j, std::string where)
    : j_(j), where_(std::move(where)) {
  if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
}

const json& StrictObject::at(const std::string& key) {
  if (!has(key)) throw ConfigError(where_ + ": missing key '" + key + "'");
  seen_.push_back(key);
  return j_.at(key);
}

void StrictObject::finish() const {
  std::string unknown;
  for (const auto& item : j_.items()) {
    bool known = false;
    for (const auto& s : seen_) known = known || s == item.key();
    if (!known) unknown += (unknown.empty() ? "" : ", ") + item.key();
  }
  if (!unknown.empty()) {
    throw ConfigError(where_ + ": unknown key(s): " + unknown);
  }
}

void StrictObject::fail(const std::string& key, const std::string& why) const {
  throw ConfigError(where_ + "." + key + ": " + why);
}

json to_json(const Interval& iv) { return json::array({iv.lo, iv.hi}); }

json to_json(const GenConfig& c) {
  return {{"k", c.k},
          {"d", c.d},
          {"P", c.P},
          {"C_p", c.C_p},
          {"s", c.s},
          {"sigma_p", c.sigma_p},
          {"gamma", c.gamma},
          {"mu", c.mu},
          {"rho", c.rho},
          {"gamma_sv", c.gamma_sv},
          {"mv_main", to_json(c.mv_main)},
          {"mv_minor", to_json(c.mv_minor)},
          {"ood_feat", to_json(c.ood_feat)},
          {"sv_main", to_json(c.sv_main)},
          {"offpatch_noise_scale", c.offpatch_noise_scale},
          {"allow_pure_noise_ood", c.allow_pure_noise_ood}};
}

namespace {

void get_interval(StrictObject& obj, const std::string& key, Interval& iv) {
  if (!obj.has(key)) return;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() ||
      !v[1].is_number()) {
    throw ConfigError("gen." + key + ": expected [lo, hi]");
  }
  iv = {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

GenConfig gen_config_from_json(const json& j) {
  StrictObject obj(j, "gen");
  int k = 10, d = 64, P = 16;
  obj.get("k", k);
  obj.get("d", d);
  obj.get("P", P);
  if (k < 1 || d < 1 || P < 1) throw ConfigError("gen: k, d, P must be >= 1");
  GenConfig c = GenConfig::defaults(k, d, P);
  obj.get("C_p", c.C_p);
  obj.get("s", c.s);
  obj.get("sigma_p", c.sigma_p);
  obj.get("gamma", c.gamma);
  // The off-patch scale follows gamma unless set explicitly.
  c.offpatch_noise_scale = c.gamma * k / std::sqrt(static_cast<double>(d));
  obj.get("mu", c.mu);
  obj.get("rho", c.rho);
  obj.get("gamma_sv", c.gamma_sv);
  get_interval(obj, "mv_main", c.mv_main);
  get_interval(obj, "mv_minor", c.mv_minor);
  get_interval(obj, "ood_feat", c.ood_feat);
  get_interval(obj, "sv_main", c.sv_main);
  obj.get("offpatch_noise_scale", c.offpatch_noise_scale);
  obj.get("allow_pure_noise_ood", c.allow_pure_noise_ood);
  obj.finish();
  return c;
}

json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace mvol
