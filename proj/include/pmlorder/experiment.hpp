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

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pmlorder/criterion.hpp"
#include "pmlorder/deviations.hpp"
#include "pmlorder/mle.hpp"
#include "pmlorder/model.hpp"

namespace pmlorder {

enum class Mode { Consistency, UnderExponent, OverRate, EntropyTable, Invariants };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

/// One experiment, in the text form
///
///   [model]      family sigma m_lo m_hi vr_basis ac_depth_max
///   [theta]      weights means | coeffs | tree
///   [criterion]  schedule regime estimator k_max k_scan_max
///   [fit]        starts tol max_iter k_hard_cap
///   [experiment] mode n_grid trials seed output_dir threads
///
/// Section headers are optional since key names are unique; a key placed
/// under the wrong header, an unknown key and a repeated key are errors.
struct ExperimentSpec {
    ModelConfig model;
    std::map<std::string, std::string> theta_pairs;
    std::string schedule = "power:0.25 D=dim";
    Regime regime = Regime::Lil;
    Estimator estimator = Estimator::Global;
    int k_max = 0;      // 0: K* + 2 (entropy_table: K*)
    int k_scan_max = 0; // 0: 2 * k_max
    FitOptions fit;
    Mode mode = Mode::Consistency;
    std::vector<std::size_t> n_grid{200, 400, 800};
    std::size_t trials = 100;
    std::uint64_t seed = 1;
    std::string output_dir = ".";
    int threads = 0;

    Theta theta_star() const;
    PenaltySchedule penalty_schedule() const;
    OrderOptions order_options() const;
    /// Throws UsageError/ParseError when the record is inconsistent.
    void validate() const;
    std::string to_text() const;
};

/// The section a key belongs to, or "" when the key is unknown.
std::string_view section_of(std::string_view key);

/// Sets one field from its text form. Section may be empty.
void apply_key(ExperimentSpec& spec, std::string_view section, std::string_view key,
               std::string_view value);

/// With check=false the record is returned without ExperimentSpec::validate,
/// for callers that only need part of it.
ExperimentSpec parse_spec(std::string_view text, bool check = true);

struct RunResult {
    int status = 0;
    std::vector<std::string> files; // CSV artifacts written, relative to output_dir
    std::vector<std::string> warnings;
    std::vector<std::string> failures;
};

/// Runs spec.mode and writes results.csv (and fit.csv where a fit applies),
/// each with a <file>.manifest.json. Progress lines go to `log`.
RunResult run(const ExperimentSpec& spec, std::ostream& log);

/// git-style blob hash: sha1("blob <size>\0" + content), hex.
std::string content_hash(std::string_view content);

/// JSON manifest for one artifact.
std::string manifest_json(const ExperimentSpec& spec, const std::string& artifact,
                          const std::string& extra_json = "{}");

} // namespace pmlorder
