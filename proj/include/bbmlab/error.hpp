// Copyright 2026 The bbmlab Authors
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

#ifndef BBMLAB_ERROR_HPP_
#define BBMLAB_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bbmlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A hard resource limit was reached. Carries how far the computation got.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, std::size_t items_done, double progress)
      : Error(what + " (items=" + std::to_string(items_done) + ", progress=" + std::to_string(progress) + ")"),
        items_done_(items_done),
        progress_(progress) {}

  std::size_t items_done() const noexcept { return items_done_; }
  double progress() const noexcept { return progress_; }

 private:
  std::size_t items_done_;
  double progress_;
};

class EmptyConfigurationError : public Error {
 public:
  using Error::Error;
};

class NotConvergedError : public Error {
 public:
  using Error::Error;
};

}  // namespace bbmlab

#endif  // BBMLAB_ERROR_HPP_
