/*
 * Copyright 2026 The lossattr Authors.
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

#ifndef LOSSATTR_ERRORS_HPP_
#define LOSSATTR_ERRORS_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lossattr {

// Base of every error thrown by the library. Callers that only need to
// distinguish user mistakes from numeric failures can catch the two
// intermediate classes below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something malformed: wrong shapes, bad labels, bad paths.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A computation produced or received a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

class InvalidArgument : public UsageError {
 public:
  using UsageError::UsageError;
};

class InvalidLabel : public UsageError {
 public:
  using UsageError::UsageError;
};

class IndexError : public UsageError {
 public:
  using UsageError::UsageError;
};

class RankingError : public UsageError {
 public:
  using UsageError::UsageError;
};

// A ForwardTrace was handed to backward() for a model it did not come from,
// or the model was updated after the trace was recorded.
class StaleTraceError : public UsageError {
 public:
  using UsageError::UsageError;
};

class IoError : public UsageError {
 public:
  using UsageError::UsageError;
};

class UnsupportedVersionError : public UsageError {
 public:
  using UsageError::UsageError;
};

class ParseError : public UsageError {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : UsageError(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Training hit a non-finite loss or parameter. The message carries the epoch
// and step.
class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace lossattr

#endif  // LOSSATTR_ERRORS_HPP_
