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

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <span>
#include <string>
#include <string_view>

#include "fdsp/numcore/tensor.hpp"

namespace fdsp {

/// Incremental 64-bit FNV-1a.
class fnv1a64 {
 public:
  static constexpr std::uint64_t offset_basis = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t prime = 0x100000001b3ULL;

  fnv1a64& update(std::span<const std::uint8_t> bytes) noexcept {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= prime;
    }
    return *this;
  }
  fnv1a64& update(std::string_view s) noexcept {
    return update({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }
  fnv1a64& update_u64(std::uint64_t v) noexcept {
    std::uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
    return update(b);
  }
  template <class Scalar>
  fnv1a64& update(const basic_tensor<Scalar>& t) noexcept {
    update_u64(t.rows).update_u64(t.cols);
    return update({reinterpret_cast<const std::uint8_t*>(t.data.data()), t.data.size() * sizeof(Scalar)});
  }

  [[nodiscard]] std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = offset_basis;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) { return fnv1a64{}.update(bytes).digest(); }
inline std::uint64_t fnv1a(std::string_view s) { return fnv1a64{}.update(s).digest(); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Bit-level payload equality; distinguishes -0.0 from 0.0 and compares NaNs by bits.
template <class Scalar>
bool bit_equal(const basic_tensor<Scalar>& a, const basic_tensor<Scalar>& b) {
  return a.rows == b.rows && a.cols == b.cols &&
         (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(Scalar)) == 0);
}

}  // namespace fdsp
