/* Copyright 2026 The pmlorder Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

namespace pmlorder {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter lies outside its family's domain (wrong dimension, mark
/// outside M, weights off the simplex, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// The caller combined arguments that do not make sense together.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Raised when a spec or serialized record cannot be parsed. Carries the
/// offending key so the CLI can name it.
class ParseError : public UsageError {
public:
    ParseError(std::string key, const std::string& what)
        : UsageError(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class FitError : public Error {
public:
    using Error::Error;
};

} // namespace pmlorder
