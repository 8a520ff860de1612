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

#include "zip_reader.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

#include "trainforge/error.hpp"

namespace trainforge::zip {
namespace {

constexpr std::uint32_t kEndOfCentralDir = 0x06054b50;
constexpr std::uint32_t kCentralHeader = 0x02014b50;
constexpr std::uint32_t kLocalHeader = 0x04034b50;

template <typename T>
T Load(const std::string& data, std::size_t pos, const std::string& path) {
  if (pos + sizeof(T) > data.size()) {
    throw Error(ErrorCode::kFileCorrupt, path + ": truncated zip structure");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
  }
  return v;
}

}  // namespace

Archive::Archive(const std::filesystem::path& path) : path_(path.string()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileMissing, path_);
  std::ostringstream ss;
  ss << in.rdbuf();
  data_ = ss.str();

  if (data_.size() < 22) throw Error(ErrorCode::kFileCorrupt, path_ + ": not a zip archive");
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = data_.size() > 22 + 65535 ? data_.size() - 22 - 65535 : 0;
  for (std::size_t p = data_.size() - 22 + 1; p-- > lowest;) {
    if (Load<std::uint32_t>(data_, p, path_) == kEndOfCentralDir) {
      eocd = p;
      break;
    }
  }
  if (eocd == std::string::npos) {
    throw Error(ErrorCode::kFileCorrupt, path_ + ": end of central directory not found");
  }
  const auto count = Load<std::uint16_t>(data_, eocd + 10, path_);
  std::size_t pos = Load<std::uint32_t>(data_, eocd + 16, path_);
  if (count == 0xFFFF || pos == 0xFFFFFFFF) {
    throw Error(ErrorCode::kUnsupportedFormat, path_ + ": ZIP64 archives are not supported");
  }
  for (std::uint16_t i = 0; i < count; ++i) {
    if (Load<std::uint32_t>(data_, pos, path_) != kCentralHeader) {
      throw Error(ErrorCode::kFileCorrupt, path_ + ": bad central directory entry");
    }
    Entry e;
    e.method = Load<std::uint16_t>(data_, pos + 10, path_);
    e.crc32 = Load<std::uint32_t>(data_, pos + 16, path_);
    e.compressed_size = Load<std::uint32_t>(data_, pos + 20, path_);
    e.size = Load<std::uint32_t>(data_, pos + 24, path_);
    const auto name_len = Load<std::uint16_t>(data_, pos + 28, path_);
    const auto extra_len = Load<std::uint16_t>(data_, pos + 30, path_);
    const auto comment_len = Load<std::uint16_t>(data_, pos + 32, path_);
    e.local_header_offset = Load<std::uint32_t>(data_, pos + 42, path_);
    if (pos + 46 + name_len > data_.size()) {
      throw Error(ErrorCode::kFileCorrupt, path_ + ": truncated entry name");
    }
    e.name = data_.substr(pos + 46, name_len);
    entries_.push_back(std::move(e));
    pos += 46 + name_len + extra_len + comment_len;
  }
}

std::string Archive::read(const Entry& entry) const {
  const std::size_t p = entry.local_header_offset;
  if (Load<std::uint32_t>(data_, p, path_) != kLocalHeader) {
    throw Error(ErrorCode::kFileCorrupt, path_ + ": bad local header for " + entry.name);
  }
  const auto name_len = Load<std::uint16_t>(data_, p + 26, path_);
  const auto extra_len = Load<std::uint16_t>(data_, p + 28, path_);
  const std::size_t start = p + 30 + name_len + extra_len;
  if (start + entry.compressed_size > data_.size()) {
    throw Error(ErrorCode::kFileCorrupt, path_ + ": truncated data for " + entry.name);
  }
  std::string out;
  if (entry.method == 0) {
    out = data_.substr(start, entry.compressed_size);
  } else if (entry.method == 8) {
    out.resize(entry.size);
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) {
      throw Error(ErrorCode::kIoError, "inflateInit2 failed");
    }
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data_.data() + start));
    zs.avail_in = static_cast<uInt>(entry.compressed_size);
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != entry.size) {
      throw Error(ErrorCode::kFileCorrupt, path_ + ": cannot inflate " + entry.name);
    }
  } else {
    throw Error(ErrorCode::kUnsupportedFormat,
                path_ + ": compression method " + std::to_string(entry.method));
  }
  const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(out.data()),
                           static_cast<uInt>(out.size()));
  if (crc != entry.crc32) {
    throw Error(ErrorCode::kFileCorrupt, path_ + ": CRC mismatch for " + entry.name);
  }
  return out;
}

}  // namespace trainforge::zip
