// Copyright 2026 The BridgeTA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef BRIDGETA_ERRORS_HPP_
#define BRIDGETA_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace bridgeta {

/// Caller handed in something malformed (shape mismatch, bad range, ...).
class InvalidArgument : public std::runtime_error {
 public:
  explicit InvalidArgument(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numeric-domain violation (log of a non-positive entry, ...).
class DomainError : public std::runtime_error {
 public:
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An internal API contract was broken (missing gradient, incomplete bundle).
class ContractViolation : public std::runtime_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::runtime_error(msg) {}
};

/// A serialized artifact does not parse (bad magic, version, truncation).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Stored data fails its integrity check.
class CorruptionError : public std::runtime_error {
 public:
  explicit CorruptionError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem-level failure; message carries the path.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bridgeta

#endif  // BRIDGETA_ERRORS_HPP_
