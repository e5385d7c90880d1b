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
#include "pmlorder/entropy.hpp"

#include <gsl/gsl_integration.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <tuple>

#include "pmlorder/errors.hpp"
#include "pmlorder/rng.hpp"

namespace pmlorder {

namespace {

constexpr int kGaussNodes = 10;

struct GaussTable {
    double x[kGaussNodes];
    double w[kGaussNodes];

    GaussTable() {
        gsl_integration_glfixed_table* t = gsl_integration_glfixed_table_alloc(kGaussNodes);
        for (int i = 0; i < kGaussNodes; ++i)
            gsl_integration_glfixed_point(-1.0, 1.0, static_cast<std::size_t>(i), &x[i], &w[i], t);
        gsl_integration_glfixed_table_free(t);
    }
};

const GaussTable& gauss_table() {
    static const GaussTable table;
    return table;
}

template <class F>
double composite_gauss(F&& f, double lo, double hi, int panels) {
    const GaussTable& g = gauss_table();
    const double h = (hi - lo) / panels;
    double total = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = lo + (p + 0.5) * h;
        double acc = 0.0;
        for (int i = 0; i < kGaussNodes; ++i) acc += g.w[i] * f(mid + 0.5 * h * g.x[i]);
        total += 0.5 * h * acc;
    }
    return total;
}

double mixture_log_density(const ThetaLM& t, double z, double sigma) {
    double top = -std::numeric_limits<double>::infinity();
    double terms[64];
    std::vector<double> heap;
    double* buf = terms;
    if (t.weights.size() > 64) {
        heap.resize(t.weights.size());
        buf = heap.data();
    }
    for (std::size_t k = 0; k < t.weights.size(); ++k) {
        buf[k] = t.weights[k] > 0.0 ? std::log(t.weights[k]) + log_gauss(z, t.means[k], sigma)
                                    : -std::numeric_limits<double>::infinity();
        top = std::max(top, buf[k]);
    }
    if (!std::isfinite(top)) return top;
    double acc = 0.0;
    for (std::size_t k = 0; k < t.weights.size(); ++k) acc += std::exp(buf[k] - top);
    return top + std::log(acc);
}

double mixture_kl_fixed(const ThetaLM& a, const ThetaLM& b, const ModelConfig& config,
                        double lo, double hi, int panels) {
    auto integrand = [&](double z) {
        const double la = mixture_log_density(a, z, config.sigma);
        if (!std::isfinite(la)) return 0.0;
        const double lb = mixture_log_density(b, z, config.sigma);
        return std::exp(la) * (la - lb);
    };
    return composite_gauss(integrand, lo, hi, panels);
}

std::pair<double, double> mixture_range(const ThetaLM& a, const ThetaLM& b, const ModelConfig& config,
                                        double half_width) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto* t : {&a, &b})
        for (double m : t->means) {
            lo = std::min(lo, m);
            hi = std::max(hi, m);
        }
    return {lo - half_width * config.sigma, hi + half_width * config.sigma};
}

/// Merges equal means and drops zero weights.
ThetaLM reduce_lm(const ThetaLM& t) {
    std::map<double, double> by_mean;
    for (std::size_t k = 0; k < t.weights.size(); ++k)
        if (t.weights[k] > 0.0) by_mean[t.means[k]] += t.weights[k];
    ThetaLM out;
    for (const auto& [m, w] : by_mean) {
        out.means.push_back(m);
        out.weights.push_back(w);
    }
    return out;
}

double mixture_cdf(const ThetaLM& t, double z, double sigma) {
    double c = 0.0;
    for (std::size_t k = 0; k < t.weights.size(); ++k)
        c += t.weights[k] * 0.5 * std::erfc(-(z - t.means[k]) / (sigma * std::sqrt(2.0)));
    return c;
}

double mixture_quantile(const ThetaLM& t, double q, double sigma) {
    double lo = *std::min_element(t.means.begin(), t.means.end()) - 12.0 * sigma;
    double hi = *std::max_element(t.means.begin(), t.means.end()) + 12.0 * sigma;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mixture_cdf(t, mid, sigma) < q ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// LM projections by multi-start Nelder-Mead over an unconstrained chart:
// K-1 logits (the last is pinned at 0) and K logistic-mapped means.

struct LmChart {
    int k;
    double lo, hi;

    int dim() const { return 2 * k - 1; }

    ThetaLM decode(const gsl_vector* v) const {
        ThetaLM t;
        std::vector<double> logits(k, 0.0);
        for (int j = 0; j + 1 < k; ++j) logits[j] = gsl_vector_get(v, j);
        const double top = *std::max_element(logits.begin(), logits.end());
        double total = 0.0;
        for (double& l : logits) total += (l = std::exp(l - top));
        for (double l : logits) t.weights.push_back(l / total);
        for (int j = 0; j < k; ++j) {
            const double u = gsl_vector_get(v, k - 1 + j);
            t.means.push_back(lo + (hi - lo) / (1.0 + std::exp(-u)));
        }
        return t;
    }

    void encode(const ThetaLM& t, gsl_vector* v) const {
        const double last = std::log(std::max(t.weights.back(), 1e-300));
        for (int j = 0; j + 1 < k; ++j)
            gsl_vector_set(v, j, std::log(std::max(t.weights[j], 1e-300)) - last);
        for (int j = 0; j < k; ++j) {
            const double span = hi - lo;
            const double p = std::clamp((t.means[j] - lo) / span, 1e-9, 1.0 - 1e-9);
            gsl_vector_set(v, k - 1 + j, std::log(p / (1.0 - p)));
        }
    }
};

struct LmObjective {
    const ModelConfig* config;
    const ThetaLM* target;
    LmChart chart;
    bool reversed; // true: minimize H(P_theta | P*)
    double lo, hi;
    int panels;
    long evals = 0;

    double operator()(const ThetaLM& t) {
        ++evals;
        return reversed ? mixture_kl_fixed(t, *target, *config, lo, hi, panels)
                        : mixture_kl_fixed(*target, t, *config, lo, hi, panels);
    }
};

double nm_trampoline(const gsl_vector* v, void* params) {
    auto* obj = static_cast<LmObjective*>(params);
    return (*obj)(obj->chart.decode(v));
}

using VectorPtr = std::unique_ptr<gsl_vector, decltype(&gsl_vector_free)>;
using MinimizerPtr = std::unique_ptr<gsl_multimin_fminimizer, decltype(&gsl_multimin_fminimizer_free)>;

std::pair<ThetaLM, double> nelder_mead(LmObjective& obj, const ThetaLM& start,
                                       const ProjectionOptions& options) {
    const int dim = obj.chart.dim();
    VectorPtr x(gsl_vector_alloc(dim), gsl_vector_free);
    VectorPtr step(gsl_vector_alloc(dim), gsl_vector_free);
    obj.chart.encode(start, x.get());
    gsl_vector_set_all(step.get(), 0.5);
    gsl_multimin_function fn{&nm_trampoline, static_cast<std::size_t>(dim), &obj};
    MinimizerPtr m(gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim),
                   gsl_multimin_fminimizer_free);
    gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), step.get());
    for (int it = 0; it < options.max_evals; ++it) {
        if (gsl_multimin_fminimizer_iterate(m.get())) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m.get()), options.simplex_size) ==
            GSL_SUCCESS)
            break;
    }
    return {obj.chart.decode(gsl_multimin_fminimizer_x(m.get())), gsl_multimin_fminimizer_minimum(m.get())};
}

Projection project_lm(const ModelConfig& config, const ThetaLM& target, int k, bool reversed,
                      const ProjectionOptions& options) {
    const ThetaLM reduced = reduce_lm(target);
    if (k >= static_cast<int>(reduced.weights.size())) {
        Projection p;
        p.entropy = {0.0, EntropyMethod::ClosedForm, 0.0};
        p.argmin = embed(Theta{reduced}, k);
        return p;
    }
    auto [lo, hi] = [&] {
        double l = *std::min_element(target.means.begin(), target.means.end());
        double h = *std::max_element(target.means.begin(), target.means.end());
        l = std::min(l, config.m_lo);
        h = std::max(h, config.m_hi);
        return std::pair{l - options.quad.half_width_sigmas * config.sigma,
                         h + options.quad.half_width_sigmas * config.sigma};
    }();
    LmObjective obj{&config, &reduced, LmChart{k, config.m_lo, config.m_hi}, reversed, lo, hi,
                    options.quad.panels};

    ThetaLM best;
    double best_value = std::numeric_limits<double>::infinity();
    for (int s = 0; s < options.starts; ++s) {
        Engine engine = make_engine(derive_seed(options.seed, static_cast<std::uint64_t>(s)));
        std::uniform_real_distribution<double> shift(-0.5, 0.5);
        std::normal_distribution<double> jitter(0.0, 0.25 * config.sigma);
        ThetaLM start;
        start.weights.assign(k, 1.0 / k);
        for (int j = 0; j < k; ++j) {
            const double q = s == 0 ? (j + 0.5) / k : (j + 0.5 + shift(engine)) / k;
            double m = mixture_quantile(reduced, std::clamp(q, 1e-6, 1.0 - 1e-6), config.sigma);
            if (s > 0) m += jitter(engine);
            start.means.push_back(config.clip(m));
        }
        auto [theta, value] = nelder_mead(obj, start, options);
        // Restart from the optimum once; Nelder-Mead stalls on flat valleys.
        std::tie(theta, value) = nelder_mead(obj, theta, options);
        if (value < best_value - 1e-14) {
            best_value = value;
            best = theta;
        }
    }
    const EntropyValue refined = reversed ? kl_mixture_quadrature(best, reduced, config, options.quad)
                                          : kl_mixture_quadrature(reduced, best, config, options.quad);
    Projection p;
    p.entropy = {refined.value, EntropyMethod::Optimized, refined.tol + options.simplex_size};
    p.argmin = best;
    return p;
}

// ---------------------------------------------------------------------------
// AC population projection over guillotine trees whose cuts are the target's
// cut coordinates. With a uniform design, H = int (f* - f_theta)^2 / (2 sigma^2).

class PopulationAc {
public:
    PopulationAc(const ModelConfig& config, const ThetaAC& target, int k_top)
        : config_(config), cells_(target.cells()), k_top_(k_top) {
        for (int a = 0; a < 2; ++a) cand_[a] = {0.0, 1.0};
        for (const auto& n : target.nodes())
            if (!n.is_leaf()) cand_[n.axis - 1].push_back(n.cut);
        for (auto& c : cand_) {
            std::sort(c.begin(), c.end());
            c.erase(std::unique(c.begin(), c.end()), c.end());
        }
        memo_.resize(config.ac_depth_max + 1);
    }

    using Key = std::array<int, 4>; // lo1, hi1, lo2, hi2 indices into cand_

    struct Choice {
        double sse = std::numeric_limits<double>::infinity();
        int axis = 0;
        int cut = 0;
        int k_left = 0, k_right = 0;
        double mark = 0.0;
    };

    Key root() const {
        return {0, static_cast<int>(cand_[0].size()) - 1, 0, static_cast<int>(cand_[1].size()) - 1};
    }

    const std::vector<Choice>& solve(const Key& key, int depth_left) {
        auto& memo = memo_[depth_left];
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        const int kcap = static_cast<int>(std::min<long long>(
            depth_left >= 30 ? (1LL << 30) : (1LL << depth_left), k_top_));
        std::vector<Choice> best(kcap + 1);
        best[1] = leaf(key);
        if (depth_left > 0 && kcap >= 2) {
            for (int a = 0; a < 2; ++a) {
                const int lo = key[2 * a], hi = key[2 * a + 1];
                for (int c = lo + 1; c < hi; ++c) {
                    Key left = key, right = key;
                    left[2 * a + 1] = c;
                    right[2 * a] = c;
                    const std::vector<Choice> ls = solve(left, depth_left - 1);
                    const std::vector<Choice>& rs = solve(right, depth_left - 1);
                    for (int kl = 1; kl < static_cast<int>(ls.size()); ++kl)
                        for (int kr = 1; kr < static_cast<int>(rs.size()) && kl + kr <= kcap; ++kr) {
                            const double sse = ls[kl].sse + rs[kr].sse;
                            if (sse < best[kl + kr].sse - 1e-15) {
                                Choice& ch = best[kl + kr];
                                ch = Choice{sse, a + 1, c, kl, kr, 0.0};
                            }
                        }
                }
            }
        }
        for (int k = 2; k <= kcap; ++k)
            if (!(best[k].sse < best[k - 1].sse - 1e-15)) best[k] = best[k - 1];
        return memo.emplace(key, std::move(best)).first->second;
    }

    ThetaAC build(const Key& key, int depth_left, int k) {
        const std::vector<Choice> sol = solve(key, depth_left);
        const Choice& c = sol[std::min<int>(k, static_cast<int>(sol.size()) - 1)];
        if (c.axis == 0) return ThetaAC::leaf(c.mark);
        const int a = c.axis - 1;
        Key left = key, right = key;
        left[2 * a + 1] = c.cut;
        right[2 * a] = c.cut;
        return ThetaAC::split(c.axis, cand_[a][c.cut], build(left, depth_left - 1, c.k_left),
                              build(right, depth_left - 1, c.k_right));
    }

private:
    Choice leaf(const Key& key) const {
        Rect r;
        r.lo[0] = cand_[0][key[0]];
        r.hi[0] = cand_[0][key[1]];
        r.lo[1] = cand_[1][key[2]];
        r.hi[1] = cand_[1][key[3]];
        double area = 0.0, first = 0.0, second = 0.0;
        for (const auto& cell : cells_) {
            const double w = r.intersect(cell.rect).area();
            area += w;
            first += w * cell.mark;
            second += w * cell.mark * cell.mark;
        }
        Choice c;
        c.mark = area > 0.0 ? config_.clip(first / area) : 0.0;
        c.sse = std::max(0.0, second - 2.0 * c.mark * first + c.mark * c.mark * area);
        return c;
    }

    const ModelConfig& config_;
    std::vector<Cell> cells_;
    int k_top_;
    std::vector<double> cand_[2];
    std::vector<std::map<Key, std::vector<Choice>>> memo_;
};

Projection project_regression(const ModelConfig& config, const Theta& target, int k) {
    Projection p;
    if (const auto* vr = std::get_if<ThetaVR>(&target)) {
        ThetaVR arg;
        double sq = 0.0;
        for (std::size_t j = 0; j < vr->coeffs.size(); ++j) {
            if (static_cast<int>(j) < k) {
                arg.coeffs.push_back(config.clip(vr->coeffs[j]));
                const double d = vr->coeffs[j] - arg.coeffs.back();
                sq += d * d;
            } else {
                sq += vr->coeffs[j] * vr->coeffs[j];
            }
        }
        arg.coeffs.resize(k, 0.0);
        p.entropy = {sq / (2.0 * config.sigma * config.sigma), EntropyMethod::ClosedForm, 0.0};
        p.argmin = arg;
        return p;
    }
    const auto& ac = std::get<ThetaAC>(target);
    const long long leaf_cap = 1LL << std::min(config.ac_depth_max, 62);
    const int k_eff = static_cast<int>(std::min<long long>(k, leaf_cap));
    PopulationAc dp(config, ac, k_eff);
    const auto& sol = dp.solve(dp.root(), config.ac_depth_max);
    const double sse = sol[std::min<int>(k_eff, static_cast<int>(sol.size()) - 1)].sse;
    p.entropy = {sse / (2.0 * config.sigma * config.sigma), EntropyMethod::ClosedForm, 1e-14};
    p.argmin = dp.build(dp.root(), config.ac_depth_max, k_eff);
    return p;
}

void check_projection_args(const ModelConfig& config, const Theta& target, int k) {
    if (k < 1) throw UsageError("projection needs K >= 1");
    config.validate();
    validate(config, target);
}

} // namespace

std::string_view to_string(EntropyMethod method) {
    switch (method) {
    case EntropyMethod::ClosedForm: return "closed_form";
    case EntropyMethod::Quadrature: return "quadrature";
    case EntropyMethod::Optimized: return "optimized";
    }
    return "?";
}

EntropyValue kl_regression(const Theta& a, const Theta& b, const ModelConfig& config) {
    if (config.family == Family::LM || family_of(a) == Family::LM || family_of(b) == Family::LM)
        throw UsageError("kl_regression applies to VR/AC; use kl_mixture_quadrature for LM");
    if (family_of(a) != family_of(b)) throw UsageError("kl_regression arguments differ in family");
    const double scale = 2.0 * config.sigma * config.sigma;
    if (const auto* va = std::get_if<ThetaVR>(&a)) {
        const auto& vb = std::get<ThetaVR>(b);
        const std::size_t len = std::max(va->coeffs.size(), vb.coeffs.size());
        double sq = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            const double ca = k < va->coeffs.size() ? va->coeffs[k] : 0.0;
            const double cb = k < vb.coeffs.size() ? vb.coeffs[k] : 0.0;
            sq += (ca - cb) * (ca - cb);
        }
        return {sq / scale, EntropyMethod::ClosedForm, 0.0};
    }
    const auto ca = std::get<ThetaAC>(a).cells();
    const auto cb = std::get<ThetaAC>(b).cells();
    double sq = 0.0;
    for (const auto& x : ca)
        for (const auto& y : cb) {
            const double w = x.rect.intersect(y.rect).area();
            if (w > 0.0) sq += w * (x.mark - y.mark) * (x.mark - y.mark);
        }
    return {sq / scale, EntropyMethod::ClosedForm, 1e-15};
}

EntropyValue kl_mixture_quadrature(const ThetaLM& a, const ThetaLM& b, const ModelConfig& config,
                                   const QuadOptions& quad) {
    validate(config, a);
    validate(config, b);
    const auto [lo, hi] = mixture_range(a, b, config, quad.half_width_sigmas);
    int panels = std::max(1, quad.panels);
    double previous = mixture_kl_fixed(a, b, config, lo, hi, panels);
    double diff = std::numeric_limits<double>::infinity();
    while (panels * 2 <= quad.max_panels) {
        panels *= 2;
        const double current = mixture_kl_fixed(a, b, config, lo, hi, panels);
        diff = std::abs(current - previous);
        previous = current;
        if (diff < quad.target) break;
    }
    return {std::max(previous, 0.0), EntropyMethod::Quadrature, diff};
}

EntropyValue kl(const Theta& a, const Theta& b, const ModelConfig& config) {
    if (config.family == Family::LM)
        return kl_mixture_quadrature(std::get<ThetaLM>(a), std::get<ThetaLM>(b), config);
    return kl_regression(a, b, config);
}

Projection project_entropy(const ModelConfig& config, const Theta& target, int k,
                           const ProjectionOptions& options) {
    check_projection_args(config, target, k);
    if (config.family == Family::LM)
        return project_lm(config, std::get<ThetaLM>(target), k, false, options);
    return project_regression(config, target, k);
}

Projection stein_bound(const ModelConfig& config, const Theta& target, int k,
                       const ProjectionOptions& options) {
    check_projection_args(config, target, k);
    if (config.family == Family::LM)
        return project_lm(config, std::get<ThetaLM>(target), k, true, options);
    // The regression entropy is symmetric in its arguments.
    return project_regression(config, target, k);
}

double pythagorean_residual(const Theta& p, const Theta& q_prime, const Theta& q,
                            const ModelConfig& config) {
    return kl(p, q, config).value - kl(p, q_prime, config).value - kl(q_prime, q, config).value;
}

ReversedProjectionReport reversed_projection_check_vr(const ThetaVR& q, const ThetaVR& theta_bar,
                                                      const std::vector<ThetaVR>& probes,
                                                      const ModelConfig& config, double tol) {
    if (config.family != Family::VR) throw UsageError("reversed projection check is VR-only");
    ReversedProjectionReport report;
    report.min_residual_entropy = std::numeric_limits<double>::infinity();
    report.min_residual_inner = std::numeric_limits<double>::infinity();
    const Theta q_t{q}, bar_t{theta_bar};
    const double base = kl_regression(q_t, bar_t, config).value;
    for (const auto& probe : probes) {
        if (probe.coeffs.size() != theta_bar.coeffs.size())
            throw UsageError("probe dimension differs from theta_bar");
        const Theta probe_t{probe};
        const double r15 = kl_regression(q_t, probe_t, config).value - base -
                           kl_regression(bar_t, probe_t, config).value;
        double inner = 0.0;
        for (std::size_t k = 0; k < theta_bar.coeffs.size(); ++k) {
            const double qk = k < q.coeffs.size() ? q.coeffs[k] : 0.0;
            inner += (theta_bar.coeffs[k] - probe.coeffs[k]) * (qk - theta_bar.coeffs[k]);
        }
        report.min_residual_entropy = std::min(report.min_residual_entropy, r15);
        report.min_residual_inner = std::min(report.min_residual_inner, inner);
        ++report.probes;
    }
    report.accepted = report.min_residual_entropy >= -tol && report.min_residual_inner >= -tol;
    return report;
}

std::vector<ThetaVR> probe_grid_vr(const ModelConfig& config, int k, int per_axis) {
    if (k < 1 || per_axis < 2) throw UsageError("probe grid needs K >= 1 and >= 2 points per axis");
    std::vector<ThetaVR> out;
    std::vector<int> idx(k, 0);
    while (true) {
        ThetaVR t;
        for (int j = 0; j < k; ++j)
            t.coeffs.push_back(config.m_lo + (config.m_hi - config.m_lo) * idx[j] / (per_axis - 1));
        out.push_back(std::move(t));
        int j = 0;
        while (j < k && ++idx[j] == per_axis) idx[j++] = 0;
        if (j == k) break;
    }
    return out;
}

} // namespace pmlorder
