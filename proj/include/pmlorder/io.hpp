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

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pmlorder/model.hpp"

namespace pmlorder {

/// Round-trippable decimal form (17 significant digits).
std::string format_double(double value);

double parse_double(std::string_view text, const std::string& key);
long long parse_int(std::string_view text, const std::string& key);
std::vector<double> parse_double_list(std::string_view text, const std::string& key);
std::string join_doubles(const std::vector<double>& values);

struct KeyValue {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
};

/// Line-oriented `key=value` text with optional `[section]` headers.
/// Blank lines and lines starting with '#' are ignored.
std::vector<KeyValue> parse_key_values(std::string_view text);

/// Text form of a ModelConfig, one `key=value` per line:
///   family=LM|AC|VR, sigma, m_lo, m_hi, vr_basis=cosine, ac_depth_max.
std::string config_to_text(const ModelConfig& config);

/// Text form of a parameter:
///   LM: weights=w1,...,wK and means=m1,...,mK
///   VR: coeffs=c1,...,cK
///   AC: tree=<node>, node := leaf(mark) | split(axis,cut,<node>,<node>)
std::string theta_to_text(const Theta& theta);

std::string format_tree(const ThetaAC& tree);
ThetaAC parse_tree(std::string_view text);

ModelConfig config_from_pairs(const std::map<std::string, std::string>& pairs);
Theta theta_from_pairs(Family family, const std::map<std::string, std::string>& pairs);

/// CSV with header "idx,z" (LM), "idx,x1,y" (VR) or "idx,x1,x2,y" (AC).
void write_sample_csv(std::ostream& out, const Sample& sample);
Sample read_sample_csv(std::istream& in, Family family);

} // namespace pmlorder
