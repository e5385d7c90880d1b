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
#include <limits>
#include <numbers>
#include <random>

#include "pmlorder/deviations.hpp"
#include "pmlorder/entropy.hpp"
#include "pmlorder/errors.hpp"
#include "pmlorder/rng.hpp"

using namespace pmlorder;

namespace {

ModelConfig cfg(Family f) {
    ModelConfig c;
    c.family = f;
    return c;
}

template <class F>
double simpson(F&& f, double a, double b, int m) {
    const double h = (b - a) / (2 * m);
    double s = f(a) + f(b);
    for (int i = 1; i < 2 * m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

double npdf(double z, double m) { return std::exp(-0.5 * (z - m) * (z - m)) / std::sqrt(2 * std::numbers::pi); }

double mix_pdf(const ThetaLM& t, double z) {
    double p = 0;
    for (std::size_t k = 0; k < t.weights.size(); ++k) p += t.weights[k] * npdf(z, t.means[k]);
    return p;
}

// Independent KL between two unit-variance mixtures by Simpson's rule on the density ratio.
double simpson_kl(const ThetaLM& a, const ThetaLM& b) {
    return simpson([&](double z) {
        const double pa = mix_pdf(a, z);
        return pa > 0 ? pa * std::log(pa / mix_pdf(b, z)) : 0.0;
    }, -16, 16, 4000);
}

// Golden-section refinement around the best point of a coarse grid.
template <class F>
double grid_min(F&& f, double lo, double hi) {
    double best = std::numeric_limits<double>::infinity(), arg = lo;
    for (int i = 0; i <= 600; ++i) {
        const double m = lo + (hi - lo) * i / 600.0;
        const double v = f(m);
        if (v < best) best = v, arg = m;
    }
    double a = std::max(lo, arg - (hi - lo) / 600.0), b = std::min(hi, arg + (hi - lo) / 600.0);
    const double g = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 80; ++it) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        (f(c) < f(d) ? b : a) = (f(c) < f(d) ? d : c);
    }
    return std::min(best, f(0.5 * (a + b)));
}

} // namespace

TEST_SUITE("entropy") {

TEST_CASE("regression KL closed forms") {
    const ModelConfig vr = cfg(Family::VR);
    CHECK(kl_regression(ThetaVR{{1, 0.5}}, ThetaVR{{1, 0.5}}, vr).value == 0.0);
    CHECK(kl_regression(ThetaVR{{1, 0.5}}, ThetaVR{{1, 0}}, vr).value == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(kl_regression(ThetaVR{{1, 0.5}}, ThetaVR{{1}}, vr).value == doctest::Approx(0.125).epsilon(1e-15));
    ModelConfig s2 = vr;
    s2.sigma = 2.0;
    CHECK(kl_regression(ThetaVR{{1, 0.5}}, ThetaVR{{1}}, s2).value == doctest::Approx(0.125 / 4));
    const ModelConfig ac = cfg(Family::AC);
    const ThetaAC halves = ThetaAC::split(1, 0.5, ThetaAC::leaf(0), ThetaAC::leaf(1));
    for (double m : {0.0, 0.25, 0.5, 0.9}) {
        const double expect = ((0 - m) * (0 - m) + (1 - m) * (1 - m)) / 2 / 2;
        CHECK(kl_regression(halves, ThetaAC::leaf(m), ac).value == doctest::Approx(expect).epsilon(1e-14));
    }
    CHECK(kl_regression(halves, ThetaAC::leaf(0.5), ac).value == doctest::Approx(0.125).epsilon(1e-14));
    CHECK_THROWS_AS(kl_regression(ThetaLM{{1}, {0}}, ThetaLM{{1}, {0}}, cfg(Family::LM)), UsageError);
}

TEST_CASE("AC overlay KL against a point-grid oracle") {
    const ModelConfig ac = cfg(Family::AC);
    Engine e = make_engine(3);
    for (int t = 0; t < 10; ++t) {
        const auto a = std::get<ThetaAC>(random_theta(ac, 4, e));
        const auto b = std::get<ThetaAC>(random_theta(ac, 4, e));
        double grid = 0;
        const int m = 400;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                const double d = a.eval((i + 0.5) / m, (j + 0.5) / m) - b.eval((i + 0.5) / m, (j + 0.5) / m);
                grid += d * d;
            }
        grid /= 2.0 * m * m;
        CHECK(std::abs(kl_regression(a, b, ac).value - grid) < 0.02 * (1 + grid));
    }
}

TEST_CASE("VR KL agrees with a two-dimensional quadrature") {
    const ModelConfig vr = cfg(Family::VR);
    Engine e = make_engine(4);
    for (int t = 0; t < 5; ++t) {
        const auto a = std::get<ThetaVR>(random_theta(vr, 3, e));
        const auto b = std::get<ThetaVR>(random_theta(vr, 2, e));
        const double q = simpson([&](double x) {
            const double fa = eval_regression_fn(vr, a, x), fb = eval_regression_fn(vr, b, x);
            return simpson([&](double y) { return npdf(y, fa) * (std::log(npdf(y, fa)) - std::log(npdf(y, fb))); },
                           fa - 12, fa + 12, 400);
        }, 0, 1, 400);
        CHECK(std::abs(q - kl_regression(a, b, vr).value) < 1e-6);
    }
}

TEST_CASE("mixture KL by quadrature") {
    const ModelConfig lm = cfg(Family::LM);
    const ThetaLM a{{0.3, 0.7}, {-1, 2}};
    CHECK(std::abs(kl_mixture_quadrature(a, a, lm).value) < 1e-10);
    for (double m : {0.1, 0.5, 1.0, 2.0, 3.0}) {
        const EntropyValue v = kl_mixture_quadrature(ThetaLM{{1}, {0}}, ThetaLM{{1}, {m}}, lm);
        CHECK(std::abs(v.value - m * m / 2) < 1e-8);
        CHECK(v.method == EntropyMethod::Quadrature);
        CHECK(v.tol < 1e-8);
    }
    ModelConfig wide = lm;
    wide.sigma = 0.5;
    CHECK(std::abs(kl_mixture_quadrature(ThetaLM{{1}, {0}}, ThetaLM{{1}, {1}}, wide).value - 2.0) < 1e-8);
    const ThetaLM b{{0.5, 0.5}, {0.5, -2}};
    CHECK(std::abs(kl_mixture_quadrature(a, b, lm).value - simpson_kl(a, b)) < 1e-8);
}

TEST_CASE("mixture KL against a Monte Carlo estimate") {
    const ModelConfig lm = cfg(Family::LM);
    const ThetaLM mix{{0.5, 0.5}, {-1, 1}};
    const ThetaLM single{{1}, {0}};
    const Sample s = simulate(lm, mix, 10'000'000, 77);
    double sum = 0, sq = 0;
    for (double z : s.y) {
        const double r = std::log(mix_pdf(mix, z) / npdf(z, 0));
        sum += r;
        sq += r * r;
    }
    const double n = static_cast<double>(s.n());
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(kl_mixture_quadrature(mix, single, lm).value - mean) < 3 * se);
}

TEST_CASE("closed-form projections") {
    const ModelConfig vr = cfg(Family::VR);
    const Theta t = ThetaVR{{1.0, 0.5}};
    CHECK(project_entropy(vr, t, 1).entropy.value == 0.125);
    CHECK(stein_bound(vr, t, 1).entropy.value == 0.125);
    CHECK(project_entropy(vr, t, 2).entropy.value == 0.0);
    CHECK(project_entropy(vr, t, 5).entropy.value == 0.0);
    CHECK(std::get<ThetaVR>(project_entropy(vr, t, 1).argmin).coeffs == std::vector<double>{1.0});
    // clipped head: a coefficient outside a tighter box contributes its excess
    ModelConfig tight = vr;
    tight.m_lo = -0.5;
    tight.m_hi = 0.8;
    const double h = project_entropy(tight, Theta{ThetaVR{{0.7, -0.4, 0.3}}}, 1).entropy.value;
    CHECK(h == doctest::Approx((0.4 * 0.4 + 0.3 * 0.3) / 2).epsilon(1e-15));

    const ModelConfig ac = cfg(Family::AC);
    const Theta two = ThetaAC::split(1, 0.5, ThetaAC::leaf(0), ThetaAC::leaf(1));
    CHECK(std::abs(project_entropy(ac, two, 1).entropy.value - 0.125) < 1e-10);
    CHECK(std::abs(stein_bound(ac, two, 1).entropy.value - 0.125) < 1e-10);
    CHECK(project_entropy(ac, two, 2).entropy.value < 1e-15);
}

TEST_CASE("AC population projection against brute force over single cuts") {
    const ModelConfig ac = cfg(Family::AC);
    const ThetaAC target = ThetaAC::split(
        1, 0.3, ThetaAC::leaf(-1.0), ThetaAC::split(2, 0.6, ThetaAC::leaf(2.0), ThetaAC::leaf(0.5)));
    const Projection p = project_entropy(ac, target, 2);
    double best = std::numeric_limits<double>::infinity();
    for (int axis = 1; axis <= 2; ++axis)
        for (int i = 1; i < 100; ++i) {
            const double c = i / 100.0;
            // cell means by exact areas, via the closed-form KL to a leaf
            auto mean_over = [&](double lo, double hi) {
                double total = 0;
                for (const auto& cell : target.cells()) {
                    Rect r;
                    r.lo[axis - 1] = lo;
                    r.hi[axis - 1] = hi;
                    total += r.intersect(cell.rect).area() * cell.mark;
                }
                return total / (hi - lo);
            };
            const ThetaAC cand = ThetaAC::split(axis, c, ThetaAC::leaf(mean_over(0, c)), ThetaAC::leaf(mean_over(c, 1)));
            best = std::min(best, kl_regression(target, cand, ac).value);
        }
    CHECK(p.entropy.value == doctest::Approx(best).epsilon(1e-12));
    CHECK(kl_regression(target, p.argmin, ac).value == doctest::Approx(p.entropy.value).epsilon(1e-12));
    CHECK(project_entropy(ac, target, 3).entropy.value < 1e-14);
}

TEST_CASE("LM projections against grid-search oracles") {
    const ModelConfig lm = cfg(Family::LM);
    const ThetaLM target{{0.5, 0.5}, {-2, 2}};
    const Projection fwd = project_entropy(lm, Theta{target}, 1);
    const Projection rev = stein_bound(lm, Theta{target}, 1);
    const double grid_fwd = grid_min([&](double m) { return simpson_kl(target, ThetaLM{{1}, {m}}); }, -3, 3);
    const double grid_rev = grid_min([&](double m) { return simpson_kl(ThetaLM{{1}, {m}}, target); }, -3, 3);
    CHECK(fwd.entropy.method == EntropyMethod::Optimized);
    CHECK(fwd.entropy.value > 0);
    CHECK(std::abs(fwd.entropy.value - grid_fwd) < 1e-4);
    CHECK(std::abs(rev.entropy.value - grid_rev) < 1e-4);
    CHECK(std::abs(fwd.entropy.value - rev.entropy.value) > 1e-3);
    CHECK(project_entropy(lm, Theta{target}, 2).entropy.value == 0.0);
    CHECK(stein_bound(lm, Theta{target}, 3).entropy.value == 0.0);
    // a target with repeated means has order 1
    CHECK(project_entropy(lm, Theta{ThetaLM{{0.5, 0.5}, {1, 1}}}, 1).entropy.value == 0.0);
}

TEST_CASE("projections decrease strictly until the true order") {
    ProjectionOptions po;
    for (Family f : {Family::VR, Family::AC, Family::LM}) {
        const ModelConfig c = cfg(f);
        Theta target;
        if (f == Family::VR) target = ThetaVR{{1.0, -0.7, 0.4}};
        if (f == Family::AC)
            target = ThetaAC::split(2, 0.5, ThetaAC::leaf(1.0), ThetaAC::split(1, 0.5, ThetaAC::leaf(-1.0), ThetaAC::leaf(0.0)));
        if (f == Family::LM) target = ThetaLM{{0.3, 0.3, 0.4}, {-2.5, 0.0, 2.0}};
        double prev = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= 3; ++k) {
            const EntropyValue v = project_entropy(c, target, k, po).entropy;
            if (k < 3) CHECK(prev - v.value > 10 * v.tol);
            CHECK(v.value < prev);
            prev = v.value;
        }
        CHECK(prev < 1e-12);
    }
}

TEST_CASE("VR projections are symmetric") {
    const ModelConfig vr = cfg(Family::VR);
    Engine e = make_engine(8);
    for (int t = 0; t < 20; ++t) {
        const Theta target = random_theta(vr, 4, e);
        for (int k = 1; k <= 4; ++k)
            CHECK(std::abs(project_entropy(vr, target, k).entropy.value - stein_bound(vr, target, k).entropy.value) <= 1e-12);
    }
}

TEST_CASE("pythagorean residual") {
    const ModelConfig vr = cfg(Family::VR);
    const Theta p = ThetaVR{{1, 1}}, q = ThetaVR{{0, 0}}, qp = ThetaVR{{1, 0}};
    CHECK(pythagorean_residual(p, q, q, vr) == 0.0);
    CHECK(pythagorean_residual(p, qp, q, vr) == 0.0);
    Engine e = make_engine(9);
    std::uniform_real_distribution<double> u(-3, 3);
    int probes = 0;
    for (int t = 0; t < 50; ++t) {
        // sub-box B = [lo, hi]^3 and Q outside it; Q' is the coordinatewise clip
        const double lo = -1.0 - std::abs(u(e)) / 6, hi = 0.5 + std::abs(u(e)) / 6;
        ThetaVR qv{{u(e), u(e), u(e)}}, qpv = qv;
        for (double& c : qpv.coeffs) c = std::clamp(c, lo, hi);
        std::uniform_real_distribution<double> in(lo, hi);
        for (int i = 0; i < 20; ++i, ++probes) {
            const Theta pp = ThetaVR{{in(e), in(e), in(e)}};
            CHECK(pythagorean_residual(pp, qpv, qv, vr) >= -1e-10);
        }
    }
    CHECK(probes == 1000);
    // mixtures: Q' = Q leaves zero residual
    const ModelConfig lm = cfg(Family::LM);
    const Theta a = ThetaLM{{0.5, 0.5}, {-1, 1}}, b = ThetaLM{{1}, {0.3}};
    CHECK(std::abs(pythagorean_residual(a, b, b, lm)) < 1e-9);
}

TEST_CASE("reversed projection check") {
    const ModelConfig vr = cfg(Family::VR);
    const auto grid = probe_grid_vr(vr, 2, 10);
    CHECK(grid.size() == 100);
    const ThetaVR q{{1, 0.5, 0.3}};
    const auto good = reversed_projection_check_vr(q, ThetaVR{{1, 0.5}}, grid, vr);
    CHECK(good.accepted);
    CHECK(good.min_residual_entropy >= -1e-12);
    CHECK(good.min_residual_inner >= -1e-12);
    const auto bad = reversed_projection_check_vr(q, ThetaVR{{0, 0}}, grid, vr);
    CHECK_FALSE(bad.accepted);
    CHECK(bad.min_residual_entropy < -0.01);
    const auto inside = reversed_projection_check_vr(ThetaVR{{1, 0.5}}, ThetaVR{{1, 0.5}}, {ThetaVR{{1, 0.5}}}, vr);
    CHECK(inside.min_residual_entropy == 0.0);
    CHECK(inside.min_residual_inner == 0.0);
    CHECK_THROWS_AS(probe_grid_vr(vr, 2, 1), UsageError);
}

TEST_CASE("entropy is nonnegative and vanishes only on equal densities") {
    Engine e = make_engine(12);
    for (Family f : {Family::VR, Family::AC, Family::LM}) {
        const ModelConfig c = cfg(f);
        for (int t = 0; t < 20; ++t) {
            const Theta a = random_theta(c, 3, e), b = random_theta(c, 3, e);
            CHECK(kl(a, b, c).value >= 0.0);
            CHECK(kl(a, a, c).value < 1e-10);
            CHECK(kl(a, embed(a, 4), c).value < 1e-10);
        }
    }
    // identical densities written differently
    const ModelConfig lm = cfg(Family::LM);
    CHECK(kl(ThetaLM{{0.2, 0.8}, {-1, 1}}, ThetaLM{{0.8, 0.2}, {1, -1}}, lm).value < 1e-10);
    CHECK(kl(ThetaLM{{0.2, 0.8}, {-1, 1}}, ThetaLM{{0.25, 0.75}, {-1, 1}}, lm).value > 1e-4);
}

} // TEST_SUITE
