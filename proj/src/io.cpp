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
#include "pmlorder/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "pmlorder/errors.hpp"

namespace pmlorder {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct TreeParser {
    std::string_view text;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("tree", what + " at offset " + std::to_string(pos));
    }

    void skip() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    }

    void expect(char c) {
        skip();
        if (pos >= text.size() || text[pos] != c) fail(std::string("expected '") + c + "'");
        ++pos;
    }

    bool consume(std::string_view word) {
        skip();
        if (text.substr(pos, word.size()) == word) {
            pos += word.size();
            return true;
        }
        return false;
    }

    double number() {
        skip();
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] != ',' && text[pos] != ')') ++pos;
        return parse_double(trim(text.substr(start, pos - start)), "tree");
    }

    ThetaAC node() {
        if (consume("leaf")) {
            expect('(');
            const double mark = number();
            expect(')');
            return ThetaAC::leaf(mark);
        }
        if (consume("split")) {
            expect('(');
            const double axis = number();
            expect(',');
            const double cut = number();
            expect(',');
            ThetaAC left = node();
            expect(',');
            ThetaAC right = node();
            expect(')');
            if (axis != 1.0 && axis != 2.0) fail("axis must be 1 or 2");
            return ThetaAC::split(static_cast<int>(axis), cut, left, right);
        }
        fail("expected leaf(...) or split(...)");
    }
};

} // namespace

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

double parse_double(std::string_view text, const std::string& key) {
    text = trim(text);
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ParseError(key, "expected a real number, got '" + std::string(text) + "'");
    return v;
}

long long parse_int(std::string_view text, const std::string& key) {
    text = trim(text);
    long long v = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ParseError(key, "expected an integer, got '" + std::string(text) + "'");
    return v;
}

std::vector<double> parse_double_list(std::string_view text, const std::string& key) {
    std::vector<double> out;
    text = trim(text);
    if (text.empty()) throw ParseError(key, "empty list");
    std::size_t start = 0;
    while (true) {
        const auto comma = text.find(',', start);
        out.push_back(parse_double(text.substr(start, comma - start), key));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_double(values[i]);
    }
    return out;
}

std::vector<KeyValue> parse_key_values(std::string_view text) {
    std::vector<KeyValue> out;
    std::string section;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto eol = text.find('\n', start);
        if (eol == std::string_view::npos) eol = text.size();
        const std::string_view line = trim(text.substr(start, eol - start));
        ++line_no;
        start = eol + 1;
        if (line.empty() || line.front() == '#') {
            if (eol == text.size()) break;
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError("", "line " + std::to_string(line_no) + ": unterminated section");
            section = std::string(trim(line.substr(1, line.size() - 2)));
        } else {
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ParseError(std::string(line),
                                 "line " + std::to_string(line_no) + ": expected key=value");
            out.push_back({section, std::string(trim(line.substr(0, eq))),
                           std::string(trim(line.substr(eq + 1))), line_no});
        }
        if (eol == text.size()) break;
    }
    return out;
}

std::string config_to_text(const ModelConfig& config) {
    std::ostringstream out;
    out << "family=" << to_string(config.family) << '\n'
        << "sigma=" << format_double(config.sigma) << '\n'
        << "m_lo=" << format_double(config.m_lo) << '\n'
        << "m_hi=" << format_double(config.m_hi) << '\n'
        << "vr_basis=cosine\n"
        << "ac_depth_max=" << config.ac_depth_max << '\n';
    return out.str();
}

std::string format_tree(const ThetaAC& tree) {
    const auto& nodes = tree.nodes();
    auto rec = [&](auto&& self, int i) -> std::string {
        const auto& n = nodes[i];
        if (n.is_leaf()) return "leaf(" + format_double(n.mark) + ")";
        return "split(" + std::to_string(n.axis) + "," + format_double(n.cut) + "," +
               self(self, n.left) + "," + self(self, n.right) + ")";
    };
    return rec(rec, 0);
}

ThetaAC parse_tree(std::string_view text) {
    TreeParser p{text};
    ThetaAC t = p.node();
    p.skip();
    if (p.pos != text.size()) p.fail("trailing characters");
    return t;
}

std::string theta_to_text(const Theta& theta) {
    if (const auto* lm = std::get_if<ThetaLM>(&theta))
        return "weights=" + join_doubles(lm->weights) + "\nmeans=" + join_doubles(lm->means) + "\n";
    if (const auto* vr = std::get_if<ThetaVR>(&theta)) return "coeffs=" + join_doubles(vr->coeffs) + "\n";
    return "tree=" + format_tree(std::get<ThetaAC>(theta)) + "\n";
}

ModelConfig config_from_pairs(const std::map<std::string, std::string>& pairs) {
    ModelConfig c;
    for (const auto& [key, value] : pairs) {
        if (key == "family") c.family = parse_family(value);
        else if (key == "sigma") c.sigma = parse_double(value, key);
        else if (key == "m_lo") c.m_lo = parse_double(value, key);
        else if (key == "m_hi") c.m_hi = parse_double(value, key);
        else if (key == "vr_basis") {
            if (value != "cosine") throw ParseError(key, "only 'cosine' is supported");
        } else if (key == "ac_depth_max") c.ac_depth_max = static_cast<int>(parse_int(value, key));
        else throw ParseError(key, "unknown model key");
    }
    return c;
}

Theta theta_from_pairs(Family family, const std::map<std::string, std::string>& pairs) {
    auto need = [&](const std::string& key) -> const std::string& {
        const auto it = pairs.find(key);
        if (it == pairs.end()) throw ParseError(key, "missing parameter key");
        return it->second;
    };
    std::vector<std::string> allowed;
    Theta theta;
    switch (family) {
    case Family::LM:
        allowed = {"weights", "means"};
        theta = ThetaLM{parse_double_list(need("weights"), "weights"),
                        parse_double_list(need("means"), "means")};
        break;
    case Family::VR:
        allowed = {"coeffs"};
        theta = ThetaVR{parse_double_list(need("coeffs"), "coeffs")};
        break;
    case Family::AC:
        allowed = {"tree"};
        theta = parse_tree(need("tree"));
        break;
    }
    for (const auto& [key, value] : pairs)
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ParseError(key, "unknown parameter key for family " + std::string(to_string(family)));
    return theta;
}

void write_sample_csv(std::ostream& out, const Sample& sample) {
    switch (sample.family) {
    case Family::LM: out << "idx,z\n"; break;
    case Family::VR: out << "idx,x1,y\n"; break;
    case Family::AC: out << "idx,x1,x2,y\n"; break;
    }
    for (std::size_t i = 0; i < sample.n(); ++i) {
        out << i;
        if (sample.family != Family::LM) out << ',' << format_double(sample.x1[i]);
        if (sample.family == Family::AC) out << ',' << format_double(sample.x2[i]);
        out << ',' << format_double(sample.y[i]) << '\n';
    }
}

Sample read_sample_csv(std::istream& in, Family family) {
    Sample s;
    s.family = family;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("sample", "empty CSV");
    const std::string_view header =
        family == Family::LM ? "idx,z" : family == Family::VR ? "idx,x1,y" : "idx,x1,x2,y";
    if (trim(line) != header)
        throw ParseError("sample", "expected header '" + std::string(header) + "'");
    const std::size_t columns = family == Family::LM ? 2 : family == Family::VR ? 3 : 4;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto values = parse_double_list(line, "sample row " + std::to_string(row));
        if (values.size() != columns)
            throw ParseError("sample", "row " + std::to_string(row) + " has wrong column count");
        for (std::size_t c = 1; c + 1 < columns; ++c)
            if (!(values[c] >= 0.0 && values[c] <= 1.0))
                throw DomainError("sample row " + std::to_string(row) + ": design point outside [0,1]");
        if (family != Family::LM) s.x1.push_back(values[1]);
        if (family == Family::AC) s.x2.push_back(values[2]);
        s.y.push_back(values.back());
        ++row;
    }
    return s;
}

} // namespace pmlorder
