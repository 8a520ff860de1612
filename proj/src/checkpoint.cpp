/*
 * Copyright 2026 The Trainforge Authors.
 *
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

#include "trainforge/checkpoint.hpp"

#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include "trainforge/error.hpp"

namespace trainforge {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

template <typename T>
void Put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename T>
  T Get() {
    Need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool AtEnd() const { return pos_ == data_.size(); }

 private:
  void Need(std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::kFileCorrupt, path_ + ": truncated");
    }
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_blob(const fs::path& path, std::string_view magic, std::uint32_t version,
                const BinaryBlob& blob) {
  std::string out(magic);
  Put<std::uint32_t>(out, version);
  const std::string header = blob.header.dump();
  Put<std::uint64_t>(out, header.size());
  out += header;
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(blob.arrays.size()));
  for (const auto& a : blob.arrays) {
    Put<std::uint64_t>(out, a.size());
    out.append(reinterpret_cast<const char*>(a.data()), a.size() * sizeof(double));
  }
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

BinaryBlob read_blob(const fs::path& path, std::string_view magic, std::uint32_t version) {
  Reader r(ReadFile(path), path.string());
  if (r.Bytes(magic.size()) != magic) {
    throw Error(ErrorCode::kFileCorrupt, path.string() + ": bad magic");
  }
  const auto found = r.Get<std::uint32_t>();
  if (found != version) {
    throw Error(ErrorCode::kCheckpointVersionMismatch,
                path.string() + ": format version " + std::to_string(found) +
                    ", expected " + std::to_string(version));
  }
  BinaryBlob blob;
  const auto header_len = r.Get<std::uint64_t>();
  blob.header = nlohmann::json::parse(r.Bytes(header_len), nullptr, false);
  if (blob.header.is_discarded()) {
    throw Error(ErrorCode::kFileCorrupt, path.string() + ": bad header");
  }
  const auto count = r.Get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.Get<std::uint64_t>();
    const std::string raw = r.Bytes(len * sizeof(double));
    std::vector<double> a(len);
    std::memcpy(a.data(), raw.data(), raw.size());
    blob.arrays.push_back(std::move(a));
  }
  if (!r.AtEnd()) throw Error(ErrorCode::kFileCorrupt, path.string() + ": trailing bytes");
  return blob;
}

fs::path save_checkpoint(const TrainState& state, const fs::path& checkpoints_root) {
  const fs::path dir = checkpoints_root / ("step-" + std::to_string(state.global_step));
  BinaryBlob blob;
  blob.header = {
      {"global_step", state.global_step},
      {"epoch", state.epoch},
      {"step_in_epoch", state.step_in_epoch},
      {"total_steps", state.total_steps},
      {"optimizer_t", state.optimizer.t},
      {"beta1", state.optimizer.hp.beta1},
      {"beta2", state.optimizer.hp.beta2},
      {"eps", state.optimizer.hp.eps},
      {"weight_decay", state.optimizer.hp.weight_decay},
      {"rng_key", state.rng.key},
      {"rng_counter", state.rng.counter},
      {"dataset_fingerprint", state.dataset_fingerprint},
      {"config_digest", state.config_digest},
  };
  blob.arrays = {state.params, state.optimizer.m, state.optimizer.v};
  write_blob(dir / "checkpoint.bin", kCheckpointMagic, kCheckpointFormatVersion, blob);
  return dir;
}

TrainState resume(const fs::path& dir) {
  fs::path file = dir / "checkpoint.bin";
  if (!fs::exists(file)) {
    std::optional<std::int64_t> best;
    if (fs::is_directory(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (!entry.is_directory() || !name.starts_with("step-")) continue;
        if (!fs::exists(entry.path() / "checkpoint.bin")) continue;
        try {
          const std::int64_t k = std::stoll(name.substr(5));
          if (!best || k > *best) best = k;
        } catch (const std::exception&) {
        }
      }
    }
    if (!best) throw Error(ErrorCode::kCheckpointMissing, "no checkpoint under " + dir.string());
    file = dir / ("step-" + std::to_string(*best)) / "checkpoint.bin";
  }
  const BinaryBlob blob = read_blob(file, kCheckpointMagic, kCheckpointFormatVersion);
  if (blob.arrays.size() != 3) {
    throw Error(ErrorCode::kFileCorrupt, file.string() + ": expected 3 arrays");
  }
  const auto& h = blob.header;
  TrainState s;
  s.params = blob.arrays[0];
  s.optimizer.m = blob.arrays[1];
  s.optimizer.v = blob.arrays[2];
  s.optimizer.t = h.at("optimizer_t").get<std::int64_t>();
  s.optimizer.hp.beta1 = h.at("beta1").get<double>();
  s.optimizer.hp.beta2 = h.at("beta2").get<double>();
  s.optimizer.hp.eps = h.at("eps").get<double>();
  s.optimizer.hp.weight_decay = h.at("weight_decay").get<double>();
  s.global_step = h.at("global_step").get<std::int64_t>();
  s.epoch = h.at("epoch").get<std::int64_t>();
  s.step_in_epoch = h.at("step_in_epoch").get<std::int64_t>();
  s.total_steps = h.at("total_steps").get<std::int64_t>();
  s.rng.key = h.at("rng_key").get<std::uint64_t>();
  s.rng.counter = h.at("rng_counter").get<std::uint64_t>();
  s.dataset_fingerprint = h.at("dataset_fingerprint").get<std::string>();
  s.config_digest = h.at("config_digest").get<std::string>();
  return s;
}

}  // namespace trainforge
