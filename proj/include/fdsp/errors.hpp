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

#include <stdexcept>
#include <string>

namespace fdsp {

/// Root of every exception thrown by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class dimension_error : public error {
 public:
  using error::error;
};

class degenerate_input_error : public error {
 public:
  using error::error;
};

class index_error : public error {
 public:
  using error::error;
};

/// A caller broke a documented precondition (missing gradient, non-scalar root, ...).
class contract_error : public error {
 public:
  using error::error;
};

class protocol_error : public error {
 public:
  using error::error;
};

class checksum_error : public error {
 public:
  using error::error;
};

class version_error : public error {
 public:
  using error::error;
};

class schema_error : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

class config_error : public error {
 public:
  using error::error;
};

class partition_error : public error {
 public:
  using error::error;
};

/// A federated round could not complete; no aggregation happened.
class round_error : public error {
 public:
  using error::error;
};

}  // namespace fdsp
