//
// Copyright 2026 The sgdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef SGDLAB_COMMON_HPP_
#define SGDLAB_COMMON_HPP_

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sgdlab {

// Base class for every error raised by the library. Subclasses distinguish
// caller mistakes from environment and data problems so the CLI can report
// them uniformly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Input data is malformed (bad CSV cell, too many labels, empty table).
class DataError : public Error {
 public:
  using Error::Error;
};

// Filesystem access failed.
class IoError : public Error {
 public:
  using Error::Error;
};

// A persisted artifact failed validation (magic, version, length, digest).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training or a statistic produced a non-finite or degenerate value.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline void Require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

// 64-bit FNV-1a. Used for config digests and stable identifiers only.
inline std::uint64_t Fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

inline std::string HexDigest(std::uint64_t value) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[value & 0xF];
    value >>= 4;
  }
  return out;
}

// Shortest decimal that parses back to the same double.
inline std::string FormatDouble(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace sgdlab

#endif  // SGDLAB_COMMON_HPP_
