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
#include <doctest.h>

#include <sstream>

#include "pmlorder/errors.hpp"
#include "pmlorder/io.hpp"

using namespace pmlorder;

TEST_SUITE("io") {

TEST_CASE("doubles round-trip exactly") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        CHECK(parse_double(format_double(v), "x") == v);
    }
    CHECK(join_doubles({1.0, 0.5}) == "1,0.5");
    CHECK(parse_double_list(" 1, 0.5 ,-2", "k") == std::vector<double>{1.0, 0.5, -2.0});
}

TEST_CASE("number parse errors name the key") {
    try {
        parse_double("abc", "sigma");
        FAIL("no throw");
    } catch (const ParseError& e) {
        CHECK(e.key() == "sigma");
    }
    CHECK_THROWS_AS(parse_int("1.5", "trials"), ParseError);
    CHECK_THROWS_AS(parse_double_list("", "coeffs"), ParseError);
    CHECK_THROWS_AS(parse_double_list("1,,2", "coeffs"), ParseError);
}

TEST_CASE("key-value text with sections and comments") {
    const auto kv = parse_key_values("# c\n[model]\nfamily = VR\n\n[theta]\ncoeffs=1,0.5\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0].section == "model");
    CHECK(kv[0].key == "family");
    CHECK(kv[0].value == "VR");
    CHECK(kv[1].section == "theta");
    CHECK(kv[1].line == 6);
    CHECK_THROWS_AS(parse_key_values("[model\n"), ParseError);
    CHECK_THROWS_AS(parse_key_values("novalue\n"), ParseError);
}

TEST_CASE("config and theta text forms round-trip") {
    ModelConfig c;
    c.family = Family::AC;
    c.sigma = 0.1;
    c.m_lo = -1.25;
    c.ac_depth_max = 3;
    std::map<std::string, std::string> pairs;
    for (const auto& kv : parse_key_values(config_to_text(c))) pairs[kv.key] = kv.value;
    const ModelConfig back = config_from_pairs(pairs);
    CHECK(back.family == c.family);
    CHECK(back.sigma == c.sigma);
    CHECK(back.m_lo == c.m_lo);
    CHECK(back.m_hi == c.m_hi);
    CHECK(back.ac_depth_max == 3);
    CHECK_THROWS_AS(config_from_pairs({{"sgima", "1"}}), ParseError);
    CHECK_THROWS_AS(config_from_pairs({{"vr_basis", "legendre"}}), ParseError);

    const std::vector<Theta> thetas{
        ThetaLM{{0.25, 0.75}, {-1.0 / 3.0, 2.0}}, ThetaVR{{1.0, 0.1}},
        ThetaAC::split(2, 0.3, ThetaAC::leaf(0.5), ThetaAC::split(1, 0.7, ThetaAC::leaf(-1), ThetaAC::leaf(2)))};
    for (const auto& t : thetas) {
        std::map<std::string, std::string> tp;
        for (const auto& kv : parse_key_values(theta_to_text(t))) tp[kv.key] = kv.value;
        const Theta back_t = theta_from_pairs(family_of(t), tp);
        CHECK(theta_to_text(back_t) == theta_to_text(t));
    }
    CHECK_THROWS_AS(theta_from_pairs(Family::VR, {{"coefs", "1"}}), ParseError);
    CHECK_THROWS_AS(theta_from_pairs(Family::VR, {{"coeffs", "1"}, {"means", "1"}}), ParseError);
}

TEST_CASE("tree grammar") {
    const ThetaAC t = parse_tree("split(1, 0.5, leaf(0), leaf(1))");
    CHECK(t.leaf_count() == 2);
    CHECK(format_tree(t) == "split(1,0.5,leaf(0),leaf(1))");
    CHECK_THROWS_AS(parse_tree("split(1,0.5,leaf(0))"), ParseError);
    CHECK_THROWS_AS(parse_tree("leaf(1) x"), ParseError);
    CHECK_THROWS_AS(parse_tree("split(3,0.5,leaf(0),leaf(1))"), Error);
}

TEST_CASE("sample CSV round-trip") {
    for (Family f : {Family::LM, Family::VR, Family::AC}) {
        Sample s;
        s.family = f;
        s.y = {0.1, -2.0 / 3.0, 5.0};
        if (f != Family::LM) s.x1 = {0.0, 0.5, 1.0};
        if (f == Family::AC) s.x2 = {0.25, 1.0 / 7.0, 0.9};
        std::stringstream ss;
        write_sample_csv(ss, s);
        const Sample back = read_sample_csv(ss, f);
        CHECK(back.y == s.y);
        CHECK(back.x1 == s.x1);
        CHECK(back.x2 == s.x2);
    }
    std::stringstream wrong("idx,z\n0,1\n");
    CHECK_THROWS_AS(read_sample_csv(wrong, Family::VR), ParseError);
    std::stringstream outside("idx,x1,y\n0,1.5,2\n");
    CHECK_THROWS_AS(read_sample_csv(outside, Family::VR), DomainError);
    std::stringstream short_row("idx,x1,y\n0,0.5\n");
    CHECK_THROWS_AS(read_sample_csv(short_row, Family::VR), ParseError);
}

} // TEST_SUITE
