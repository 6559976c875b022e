/*
Copyright 2026 The sinpaint Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace sinpaint {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition of an operation was not met by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Input data (audio, manifests, stats files) is missing or malformed.
class DataError : public Error {
 public:
  using Error::Error;
};

// Model checkpoints are missing, corrupt, or do not match the configuration.
class ModelError : public Error {
 public:
  using Error::Error;
};

// The requested combination is not supported, e.g. LPC on random masks.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace sinpaint
