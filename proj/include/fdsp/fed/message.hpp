/*
 * Copyright 2026 The FDSP Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdsp/errors.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/numcore/tensor.hpp"

namespace fdsp::fed {

inline constexpr char message_magic[4] = {'F', 'D', 'S', 'P'};
inline constexpr std::uint16_t message_version = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// One sender's parameter upload (or a server checkpoint) for a round.
///
/// Wire layout, all integers little-endian:
///   "FDSP" | u16 version | u32 round | u32 sender | u32 count |
///   count x (u16 name_len | name | u8 rank | u32 dims[rank] | f32 payload) |
///   u64 FNV-1a of every preceding byte
struct ParamMessage {
  std::uint32_t sender = 0;
  std::uint32_t round = 0;
  std::vector<NamedTensor> entries;  // sorted by name, names unique

  void sort_entries() {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  }

  [[nodiscard]] const Tensor* find(std::string_view name) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), name,
                               [](const NamedTensor& e, std::string_view n) { return e.name < n; });
    return it != entries.end() && it->name == name ? &it->value : nullptr;
  }
};

namespace detail {

class writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) { le(std::bit_cast<std::uint32_t>(f)); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class reader {
 public:
  explicit reader(std::span<const std::uint8_t> in) : in_(in) {}
  template <class U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw protocol_error("truncated parameter message");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const ParamMessage& msg) {
  detail::writer w;
  w.bytes(message_magic, 4);
  w.le<std::uint16_t>(message_version);
  w.le<std::uint32_t>(msg.round);
  w.le<std::uint32_t>(msg.sender);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(msg.entries.size()));
  const std::string* prev = nullptr;
  for (const auto& e : msg.entries) {
    if (prev != nullptr && !(*prev < e.name)) {
      throw protocol_error("message entries must be sorted and unique (at '" + e.name + "')");
    }
    prev = &e.name;
    if (e.name.size() > 0xFFFF) throw protocol_error("entry name too long: " + e.name.substr(0, 32));
    w.le<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.le<std::uint8_t>(2);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.value.rows));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(e.value.cols));
    for (float f : e.value.data) w.f32(f);
  }
  const std::uint64_t sum = fnv1a(w.buffer());
  w.le<std::uint64_t>(sum);
  return std::move(w.buffer());
}

/// Parses and verifies a message. Throws checksum_error on any payload corruption.
inline ParamMessage deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 2 + 12 + 8) throw protocol_error("parameter message too short");
  const std::size_t body = bytes.size() - 8;
  detail::reader tail(bytes.subspan(body));
  const auto stored = tail.le<std::uint64_t>();
  if (fnv1a(bytes.first(body)) != stored) throw checksum_error("parameter message checksum mismatch");
  if (std::memcmp(bytes.data(), message_magic, 4) != 0) throw protocol_error("bad parameter message magic");

  detail::reader r(bytes.first(body));
  r.str(4);
  const auto version = r.le<std::uint16_t>();
  if (version != message_version) {
    throw version_error("unsupported parameter message version " + std::to_string(version));
  }
  ParamMessage msg;
  msg.round = r.le<std::uint32_t>();
  msg.sender = r.le<std::uint32_t>();
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    e.name = r.str(r.le<std::uint16_t>());
    const auto rank = r.le<std::uint8_t>();
    if (rank > 2) throw protocol_error("entry '" + e.name + "' has unsupported rank " + std::to_string(rank));
    std::size_t dims[2] = {1, 1};
    for (std::size_t k = 0; k < rank; ++k) dims[2 - rank + k] = r.le<std::uint32_t>();
    const std::size_t n = dims[0] * dims[1];
    if (n > r.remaining() / 4) throw protocol_error("entry '" + e.name + "' overruns the message");
    e.value = Tensor(dims[0], dims[1]);
    for (std::size_t k = 0; k < n; ++k) e.value.data[k] = r.f32();
    if (!msg.entries.empty() && !(msg.entries.back().name < e.name)) {
      throw protocol_error("message entries out of order at '" + e.name + "'");
    }
    msg.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw protocol_error("trailing bytes after parameter message entries");
  return msg;
}

inline void write_message(const std::filesystem::path& path, const ParamMessage& msg) {
  const auto bytes = serialize(msg);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("failed writing " + path.string());
}

inline ParamMessage read_message(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

/// Copies named parameter tensors into a sorted message.
template <class Named>
ParamMessage make_message(std::uint32_t sender, std::uint32_t round, const Named& named) {
  ParamMessage msg;
  msg.sender = sender;
  msg.round = round;
  for (const auto& [name, tensor] : named) {
    msg.entries.push_back({name, Tensor(tensor->rows, tensor->cols, tensor->data)});
  }
  msg.sort_entries();
  return msg;
}

}  // namespace fdsp::fed
