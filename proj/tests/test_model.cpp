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

#include <cmath>
#include <numbers>
#include <random>

#include "pmlorder/errors.hpp"
#include "pmlorder/model.hpp"
#include "pmlorder/rng.hpp"

using namespace pmlorder;

namespace {

ModelConfig cfg(Family f) {
    ModelConfig c;
    c.family = f;
    return c;
}

double half_log_2pi() { return 0.5 * std::log(2.0 * std::numbers::pi); }

// Composite Simpson rule, used as an independent integrator.
template <class F>
double simpson(F&& f, double a, double b, int m) {
    const double h = (b - a) / (2 * m);
    double s = f(a) + f(b);
    for (int i = 1; i < 2 * m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("config validation") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    c.sigma = 0.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = ModelConfig{};
    c.m_lo = 1.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = ModelConfig{};
    c.m_lo = 2.0;
    c.m_hi = 1.0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    c = ModelConfig{};
    c.ac_depth_max = 0;
    CHECK_THROWS_AS(c.validate(), DomainError);
    CHECK(ModelConfig{}.clip(7.0) == 3.0);
    CHECK(ModelConfig{}.clip(-7.0) == -3.0);
}

TEST_CASE("parameter validation") {
    const ModelConfig lm = cfg(Family::LM);
    CHECK_NOTHROW(validate(lm, ThetaLM{{0.5, 0.5}, {-1.0, 1.0}}));
    CHECK_THROWS_AS(validate(lm, ThetaLM{{0.5, 0.4}, {-1.0, 1.0}}), DomainError);
    CHECK_THROWS_AS(validate(lm, ThetaLM{{0.5, 0.5}, {-1.0, 4.0}}), DomainError);
    CHECK_THROWS_AS(validate(lm, ThetaLM{{1.0}, {0.0, 1.0}}), DomainError);
    CHECK_THROWS_AS(validate(lm, ThetaLM{{1.5, -0.5}, {0.0, 1.0}}), DomainError);
    const ModelConfig vr = cfg(Family::VR);
    CHECK_THROWS_AS(validate(vr, ThetaVR{{1.0, 3.5}}), DomainError);
    CHECK_THROWS_AS(validate(vr, ThetaLM{{1.0}, {0.0}}), Error);
    ModelConfig ac = cfg(Family::AC);
    ac.ac_depth_max = 1;
    const ThetaAC deep = ThetaAC::split(
        1, 0.5, ThetaAC::split(2, 0.5, ThetaAC::leaf(0), ThetaAC::leaf(1)), ThetaAC::leaf(2));
    CHECK_THROWS_AS(validate(ac, deep), DomainError);
    ac.ac_depth_max = 2;
    CHECK_NOTHROW(validate(ac, deep));
    // a cut outside its cell is rejected
    const ThetaAC bad = ThetaAC::split(
        1, 0.5, ThetaAC::split(1, 0.7, ThetaAC::leaf(0), ThetaAC::leaf(1)), ThetaAC::leaf(2));
    CHECK_THROWS_AS(validate(ac, bad), DomainError);
}

TEST_CASE("simulate: single standard component is reproducible") {
    const ModelConfig c = cfg(Family::LM);
    const Theta t = ThetaLM{{1.0}, {0.0}};
    const Sample a = simulate(c, t, 3, 7);
    const Sample b = simulate(c, t, 3, 7);
    REQUIRE(a.n() == 3);
    CHECK(a.y == b.y);
    CHECK(a.seed == 7);
    const Sample other = simulate(c, t, 3, 8);
    CHECK(other.y != a.y);
    // the draws are N(0,1): check moments on a large sample
    const Sample big = simulate(c, t, 100000, 7);
    double m = 0, v = 0;
    for (double z : big.y) m += z;
    m /= big.n();
    for (double z : big.y) v += (z - m) * (z - m);
    v /= big.n();
    CHECK(std::abs(m) < 0.02);
    CHECK(std::abs(v - 1.0) < 0.02);
}

TEST_CASE("simulate: zero regression function") {
    const Sample s = simulate(cfg(Family::VR), ThetaVR{{0.0, 0.0}}, 100000, 3);
    double m = 0;
    for (double y : s.y) m += y;
    CHECK(std::abs(m / s.n()) < 0.02);
    for (double x : s.x1) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
    }
}

TEST_CASE("simulate: mixture moments match analytic values") {
    const ThetaLM t{{0.5, 0.5}, {-2.0, 2.0}};
    const ModelConfig c = cfg(Family::LM);
    const Sample s = simulate(c, t, 100000, 11);
    double m = 0, v = 0;
    for (double z : s.y) m += z;
    m /= s.n();
    for (double z : s.y) v += (z - m) * (z - m);
    v /= s.n();
    // Var = sigma^2 + sum pi m^2 - (sum pi m)^2
    const double var = 1.0 + 0.5 * 4 + 0.5 * 4 - 0.0;
    CHECK(std::abs(v - var) / var < 0.02);
    CHECK(std::abs(m) < 4 * std::sqrt(var / s.n()));

    const ThetaLM skew{{0.2, 0.8}, {-1.0, 2.5}};
    const Sample s2 = simulate(c, skew, 100000, 12);
    double m2 = 0;
    for (double z : s2.y) m2 += z;
    m2 /= s2.n();
    const double mean = 0.2 * -1.0 + 0.8 * 2.5;
    const double var2 = 1.0 + 0.2 * 1.0 + 0.8 * 6.25 - mean * mean;
    CHECK(std::abs(m2 - mean) < 4 * std::sqrt(var2 / s2.n()));
}

TEST_CASE("simulate: zero-weight components are never drawn") {
    const ThetaLM t{{0.0, 1.0, 0.0}, {-3.0, 0.0, 3.0}};
    const Sample s = simulate(cfg(Family::LM), t, 20000, 5);
    for (double z : s.y) CHECK(std::abs(z) < 6.0);
}

TEST_CASE("simulate: AC design covers the unit square") {
    const ThetaAC t = ThetaAC::split(1, 0.5, ThetaAC::leaf(0.0), ThetaAC::leaf(1.0));
    const Sample s = simulate(cfg(Family::AC), t, 5000, 2);
    double left = 0, right = 0;
    int nl = 0, nr = 0;
    for (std::size_t i = 0; i < s.n(); ++i) {
        CHECK(s.x2[i] >= 0.0);
        CHECK(s.x2[i] <= 1.0);
        (s.x1[i] < 0.5 ? (left += s.y[i], nl++) : (right += s.y[i], nr++));
    }
    CHECK(std::abs(left / nl) < 0.1);
    CHECK(std::abs(right / nr - 1.0) < 0.1);
}

TEST_CASE("simulate rejects bad input") {
    CHECK_THROWS_AS(simulate(cfg(Family::VR), ThetaVR{{5.0}}, 10, 1), DomainError);
    CHECK_THROWS_AS(simulate(cfg(Family::VR), ThetaVR{{0.5}}, 0, 1), UsageError);
}

TEST_CASE("log_density examples") {
    CHECK(log_density(cfg(Family::LM), ThetaLM{{1.0}, {0.0}}, {0, 0, 0.0}) ==
          doctest::Approx(-half_log_2pi()).epsilon(1e-15));
    const ThetaVR vr{{1.0, 0.5}};
    const double f = eval_regression_fn(cfg(Family::VR), vr, 0.5);
    CHECK(log_density(cfg(Family::VR), vr, {0.5, 0, f}) ==
          doctest::Approx(-half_log_2pi()).epsilon(1e-15));
    // symmetric mixture at 0: both components contribute gamma(0; 1)
    const double direct = std::log(0.5 * std::exp(-0.5) / std::sqrt(2 * std::numbers::pi) +
                                   0.5 * std::exp(-0.5) / std::sqrt(2 * std::numbers::pi));
    CHECK(log_density(cfg(Family::LM), ThetaLM{{0.5, 0.5}, {-1.0, 1.0}}, {0, 0, 0.0}) ==
          doctest::Approx(direct).epsilon(1e-14));
    CHECK(direct == doctest::Approx(log_gauss(0.0, -1.0, 1.0)).epsilon(1e-14));
}

TEST_CASE("log_density is stable far in the tails") {
    const double v = log_density(cfg(Family::LM), ThetaLM{{0.5, 0.5}, {-1.0, 1.0}}, {0, 0, 60.0});
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(std::log(0.5) + log_gauss(60.0, 1.0, 1.0)).epsilon(1e-12));
}

TEST_CASE("log_likelihood") {
    const ModelConfig c = cfg(Family::VR);
    const ThetaVR t{{1.0, -0.5, 0.25}};
    Sample empty;
    empty.family = Family::VR;
    CHECK(log_likelihood(c, t, empty) == 0.0);
    const Sample s = simulate(c, t, 500, 9);
    CHECK(log_likelihood(c, t, s.prefix(1)) == log_density(c, t, s.at(0)));
    // naive summation oracle
    double naive = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i) {
        const double f = 1.0 * std::sqrt(2.0) * std::cos(std::numbers::pi * s.x1[i]) -
                         0.5 * std::sqrt(2.0) * std::cos(2 * std::numbers::pi * s.x1[i]) +
                         0.25 * std::sqrt(2.0) * std::cos(3 * std::numbers::pi * s.x1[i]);
        const double r = s.y[i] - f;
        naive += -0.5 * std::log(2 * std::numbers::pi) - 0.5 * r * r;
    }
    CHECK(std::abs(log_likelihood(c, t, s) - naive) <= 1e-12 * std::abs(naive));
    Sample wrong = s;
    wrong.family = Family::LM;
    CHECK_THROWS_AS(log_likelihood(c, t, wrong), UsageError);
}

TEST_CASE("eval_regression_fn examples") {
    CHECK(eval_regression_fn(cfg(Family::VR), ThetaVR{{1.0}}, 0.0) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(eval_regression_fn(cfg(Family::VR), ThetaVR{{1.0, 0.5}}, 0.25) ==
          doctest::Approx(1.0).epsilon(1e-14));
    const ThetaAC leaf = ThetaAC::leaf(0.7);
    for (double x : {0.0, 0.3, 0.99}) CHECK(eval_regression_fn(cfg(Family::AC), leaf, x, 1 - x) == 0.7);
    CHECK_THROWS_AS(eval_regression_fn(cfg(Family::LM), ThetaLM{{1.0}, {0.0}}, 0.1), UsageError);
}

TEST_CASE("cosine system is orthonormal") {
    for (int j = 1; j <= 4; ++j)
        for (int k = 1; k <= 4; ++k) {
            const double ip = simpson([&](double x) { return basis_fn(j, x) * basis_fn(k, x); }, 0, 1, 2000);
            CHECK(ip == doctest::Approx(j == k ? 1.0 : 0.0).epsilon(1e-9).scale(1.0));
        }
}

TEST_CASE("densities integrate to one") {
    const ModelConfig lm = cfg(Family::LM);
    const ThetaLM t{{0.3, 0.7}, {-1.0, 2.0}};
    const double mass = simpson([&](double z) { return std::exp(log_density(lm, t, {0, 0, z})); },
                                -13.0, 14.0, 20000);
    CHECK(std::abs(mass - 1.0) < 1e-6);
    const ModelConfig vr = cfg(Family::VR);
    const ThetaVR v{{1.0, 0.5}};
    for (double x : {0.1, 0.5, 0.8}) {
        const double f = eval_regression_fn(vr, v, x);
        const double m = simpson([&](double y) { return std::exp(log_density(vr, v, {x, 0, y})); },
                                 f - 12, f + 12, 20000);
        CHECK(std::abs(m - 1.0) < 1e-6);
    }
}

TEST_CASE("nesting embeddings preserve the density") {
    Engine e = make_engine(4);
    std::uniform_real_distribution<double> u(0, 1);
    const ModelConfig vr = cfg(Family::VR);
    const Theta v = ThetaVR{{1.0, -0.3}};
    const Theta v3 = embed(v, 3);
    CHECK(std::get<ThetaVR>(v3).coeffs.size() == 3);
    const ModelConfig lm = cfg(Family::LM);
    const Theta l = ThetaLM{{0.4, 0.6}, {-1.0, 1.0}};
    const Theta l4 = embed(l, 4);
    const ModelConfig ac = cfg(Family::AC);
    const Theta a = ThetaAC::split(2, 0.3, ThetaAC::leaf(0.2), ThetaAC::leaf(-1.0));
    // splitting a cell with equal marks
    const Theta a_split = ThetaAC::split(
        2, 0.3, ThetaAC::split(1, 0.6, ThetaAC::leaf(0.2), ThetaAC::leaf(0.2)), ThetaAC::leaf(-1.0));
    CHECK(true_order(a_split) == 2);
    for (int i = 0; i < 200; ++i) {
        const Observation o{u(e), u(e), 4 * u(e) - 2};
        CHECK(log_density(vr, v, o) == log_density(vr, v3, o));
        CHECK(log_density(lm, l, o) == doctest::Approx(log_density(lm, l4, o)).epsilon(1e-15));
        CHECK(log_density(ac, a, o) == log_density(ac, a_split, o));
    }
    CHECK_THROWS_AS(embed(v, 1), UsageError);
}

TEST_CASE("true order") {
    CHECK(true_order(ThetaVR{{1.0, 0.5, 0.0}}) == 2);
    CHECK(true_order(ThetaVR{{0.0}}) == 1);
    CHECK(true_order(ThetaLM{{0.5, 0.5}, {1.0, 1.0}}) == 1);
    CHECK(true_order(ThetaLM{{0.5, 0.0, 0.5}, {1.0, 2.0, -1.0}}) == 2);
    CHECK(true_order(ThetaAC::split(1, 0.5, ThetaAC::leaf(1), ThetaAC::leaf(1))) == 1);
    CHECK(class_index(ThetaLM{{0.5, 0.0, 0.5}, {1.0, 2.0, -1.0}}) == 3);
}

TEST_CASE("AC tree geometry") {
    const ThetaAC t = ThetaAC::split(
        1, 0.5, ThetaAC::split(2, 0.25, ThetaAC::leaf(1), ThetaAC::leaf(2)), ThetaAC::leaf(3));
    CHECK(t.leaf_count() == 3);
    CHECK(t.depth() == 2);
    CHECK(t.eval(0.2, 0.1) == 1);
    CHECK(t.eval(0.2, 0.9) == 2);
    CHECK(t.eval(0.5, 0.1) == 3); // the left child holds x < cut
    double area = 0;
    for (const auto& c : t.cells()) area += c.rect.area();
    CHECK(area == doctest::Approx(1.0));
    CHECK(t.cells().size() == 3);
}

TEST_CASE("seed derivation") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
    CHECK(derive_seed(5, 9) == derive_seed(5, 9));
}

} // TEST_SUITE
