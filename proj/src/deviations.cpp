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
#include "pmlorder/deviations.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "pmlorder/errors.hpp"

namespace pmlorder {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

ThetaAC random_tree(const ModelConfig& config, int leaves, int depth, Rect cell, Engine& engine) {
    std::uniform_real_distribution<double> mark(config.m_lo, config.m_hi);
    if (leaves <= 1 || depth == 0) return ThetaAC::leaf(mark(engine));
    std::uniform_int_distribution<int> pick_axis(1, 2);
    std::uniform_real_distribution<double> frac(0.05, 0.95);
    const int axis = pick_axis(engine);
    const int a = axis - 1;
    const double cut = cell.lo[a] + (cell.hi[a] - cell.lo[a]) * frac(engine);
    const int sub_cap = depth - 1 >= 30 ? (1 << 30) : (1 << (depth - 1));
    const int left_min = std::max(1, leaves - sub_cap);
    const int left_max = std::min(leaves - 1, sub_cap);
    const int left_leaves = std::uniform_int_distribution<int>(left_min, left_max)(engine);
    Rect lo = cell, hi = cell;
    lo.hi[a] = cut;
    hi.lo[a] = cut;
    ThetaAC left = random_tree(config, left_leaves, depth - 1, lo, engine);
    ThetaAC right = random_tree(config, leaves - left_leaves, depth - 1, hi, engine);
    return ThetaAC::split(axis, cut, left, right);
}

ThetaAC remark_tree(const ThetaAC& tree, int node, const ModelConfig& config, double scale,
                    Engine& engine) {
    const auto& n = tree.nodes()[node];
    if (n.is_leaf()) {
        std::normal_distribution<double> noise(0.0, scale);
        return ThetaAC::leaf(config.clip(n.mark + noise(engine)));
    }
    return ThetaAC::split(n.axis, n.cut, remark_tree(tree, n.left, config, scale, engine),
                          remark_tree(tree, n.right, config, scale, engine));
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;
    double slope_se = 0.0;
};

LineFit ols(const std::vector<std::pair<double, double>>& pts) {
    const double m = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if (!(sxx > 0.0)) throw FitError("exponent fit needs at least two distinct x values");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0.0;
    for (const auto& [x, y] : pts) {
        const double r = y - (f.intercept + f.slope * x);
        ss_res += r * r;
    }
    f.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    f.slope_se = pts.size() > 2 ? std::sqrt(ss_res / (m - 2.0) / sxx) : 0.0;
    return f;
}

ExponentFit fit_on_axis(const std::vector<std::pair<double, double>>& points, FitAxis axis,
                        const std::function<double(double)>& x_of_n) {
    ExponentFit out;
    out.x_axis = axis;
    for (const auto& [n, p] : points) {
        if (p > 0.0 && p < 1.0)
            out.points.emplace_back(x_of_n(n), -std::log(p));
        else
            ++out.excluded;
    }
    if (out.points.size() < 3) throw FitError("exponent fit needs at least 3 points with p in (0,1)");
    const LineFit f = ols(out.points);
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.r2 = f.r2;
    out.slope_se = f.slope_se;
    return out;
}

} // namespace

std::string_view to_string(Estimator estimator) {
    return estimator == Estimator::Local ? "local" : "global";
}

Estimator parse_estimator(std::string_view text) {
    if (text == "local") return Estimator::Local;
    if (text == "global") return Estimator::Global;
    throw ParseError("estimator", "expected local or global, got '" + std::string(text) + "'");
}

std::string_view to_string(ProbMethod method) {
    return method == ProbMethod::PlainMc ? "plain_mc" : "importance_sampling";
}

std::string_view to_string(FitAxis axis) { return axis == FitAxis::N ? "n" : "vn2_over_n"; }

Interval wilson(std::size_t successes, std::size_t trials, double z) {
    if (trials == 0) return {0.0, 1.0};
    const double t = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / t;
    const double z2 = z * z;
    const double centre = (p + z2 / (2.0 * t)) / (1.0 + z2 / t);
    const double half = z * std::sqrt(p * (1.0 - p) / t + z2 / (4.0 * t * t)) / (1.0 + z2 / t);
    Interval ci{std::max(0.0, centre - half), std::min(1.0, centre + half)};
    // Guard the endpoints against rounding so the interval always contains p.
    if (successes == 0) ci.lo = 0.0;
    if (successes == trials) ci.hi = 1.0;
    ci.lo = std::min(ci.lo, p);
    ci.hi = std::max(ci.hi, p);
    return ci;
}

TrialSetup make_trial_setup(const ModelConfig& config, const Theta& theta_star,
                            const PenaltySchedule& schedule, Estimator estimator, std::size_t n,
                            std::uint64_t seed, const FitOptions& fit_options,
                            const OrderOptions& order) {
    config.validate();
    validate(config, theta_star);
    if (n < 1) throw UsageError("trials need n >= 1");
    TrialSetup s;
    s.config = config;
    s.theta_star = theta_star;
    s.sampling = theta_star;
    s.schedule = schedule;
    s.estimator = estimator;
    s.n = n;
    s.seed = seed;
    s.fit_options = fit_options;
    s.k_star = true_order(theta_star);
    s.k_max = order.k_max > 0 ? order.k_max : s.k_star + 2;
    s.k_scan_max = order.k_scan_max > 0 ? order.k_scan_max : 2 * s.k_max;
    if (s.k_max < s.k_star) throw UsageError("k_max must be at least the true order");
    if (std::max(s.k_max, s.k_scan_max + 1) > schedule.k_cap())
        throw UsageError("schedule weights do not reach k_max / k_scan_max + 1");
    return s;
}

TrialOutcome run_trial(const TrialSetup& setup, std::size_t index) {
    const std::uint64_t trial_seed = derive_seed(setup.seed, index);
    const Sample sample = simulate(setup.config, setup.sampling, setup.n, trial_seed);
    FitOptions fit_options = setup.fit_options;
    fit_options.seed = derive_seed(trial_seed, 0x5eedf17ULL);
    const int k_top = std::max(setup.k_max, setup.k_scan_max + 1);
    const ProfileCurve curve = profile(sample, setup.config, k_top, fit_options);
    const OrderEstimate est = estimate_order(curve, setup.schedule, static_cast<double>(setup.n),
                                             setup.k_max, setup.k_scan_max);
    TrialOutcome out;
    out.index = index;
    out.k_local = est.k_local;
    out.k_global = est.k_global;
    out.cap_hit = est.scan_cap_hit;
    if (setup.weighted)
        out.log_weight = log_likelihood(setup.config, setup.theta_star, sample) -
                         log_likelihood(setup.config, setup.sampling, sample);
    return out;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
    unsigned workers = threads > 0 ? static_cast<unsigned>(threads) : std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    next = count;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<TrialOutcome> run_trials(const TrialSetup& setup, std::size_t trials, int threads) {
    std::vector<TrialOutcome> out(trials);
    parallel_for(trials, threads, [&](std::size_t i) { out[i] = run_trial(setup, i); });
    return out;
}

ErrorProbEstimate tally(const TrialSetup& setup, const std::vector<TrialOutcome>& outcomes) {
    ErrorProbEstimate e;
    e.n = setup.n;
    e.trials = outcomes.size();
    if (outcomes.empty()) throw UsageError("trials must be at least 1");
    const double t = static_cast<double>(outcomes.size());

    if (!setup.weighted) {
        std::size_t under = 0, over = 0, correct = 0;
        for (const auto& o : outcomes) {
            const int k = o.k_hat(setup.estimator);
            (k < setup.k_star ? under : k > setup.k_star ? over : correct)++;
        }
        e.method = ProbMethod::PlainMc;
        e.p_under = under / t;
        e.p_over = over / t;
        e.p_correct = correct / t;
        e.ci_under = wilson(under, outcomes.size());
        e.ci_over = wilson(over, outcomes.size());
        e.ci_correct = wilson(correct, outcomes.size());
        e.ess = t;
        e.log_p_under = under > 0 ? std::log(e.p_under) : kNegInf;
        e.se_under = std::sqrt(e.p_under * (1.0 - e.p_under) / t);
        return e;
    }

    // Weighted means of the three indicators, with weights rescaled by the
    // largest log-weight so that nothing underflows before the final step.
    e.method = ProbMethod::ImportanceSampling;
    std::vector<double> lw[3];
    for (const auto& o : outcomes) {
        const int k = o.k_hat(setup.estimator);
        lw[k < setup.k_star ? 0 : k > setup.k_star ? 2 : 1].push_back(o.log_weight);
    }
    double* p_out[3] = {&e.p_under, &e.p_correct, &e.p_over};
    Interval* ci_out[3] = {&e.ci_under, &e.ci_correct, &e.ci_over};
    for (int c = 0; c < 3; ++c) {
        if (lw[c].empty()) {
            *p_out[c] = 0.0;
            *ci_out[c] = {0.0, 0.0};
            if (c == 0) {
                e.log_p_under = kNegInf;
                e.se_under = 0.0;
                e.ess = 0.0;
            }
            continue;
        }
        const double top = *std::max_element(lw[c].begin(), lw[c].end());
        double s1 = 0.0, s2 = 0.0;
        for (double l : lw[c]) {
            const double w = std::exp(l - top);
            s1 += w;
            s2 += w * w;
        }
        const double log_mean = top + std::log(s1 / t);
        const double mean_scaled = s1 / t;
        const double var_scaled = std::max(0.0, s2 / t - mean_scaled * mean_scaled);
        const double se = std::exp(top) * std::sqrt(var_scaled / t);
        const double p = std::exp(log_mean);
        *p_out[c] = std::min(p, 1.0);
        *ci_out[c] = {std::max(0.0, p - kZ95 * se), std::min(1.0, p + kZ95 * se)};
        ci_out[c]->lo = std::min(ci_out[c]->lo, *p_out[c]);
        ci_out[c]->hi = std::max(ci_out[c]->hi, *p_out[c]);
        if (c == 0) {
            e.log_p_under = log_mean;
            e.se_under = se;
            e.ess = s1 * s1 / s2;
        }
    }
    e.reliable = e.ess >= 10.0;
    return e;
}

ErrorProbEstimate mc_error_probs(const ModelConfig& config, const Theta& theta_star,
                                 const PenaltySchedule& schedule, Estimator estimator,
                                 std::size_t n, std::size_t trials, std::uint64_t seed,
                                 const FitOptions& fit_options, const OrderOptions& order) {
    if (trials < 1) throw UsageError("trials must be at least 1");
    const TrialSetup setup =
        make_trial_setup(config, theta_star, schedule, estimator, n, seed, fit_options, order);
    return tally(setup, run_trials(setup, trials, order.threads));
}

Theta default_proposal(const ModelConfig& config, const Theta& theta_star,
                       const ProjectionOptions& options) {
    const int k_star = true_order(theta_star);
    if (k_star < 2) throw UsageError("underestimation needs a true order of at least 2");
    return project_entropy(config, theta_star, k_star - 1, options).argmin;
}

ErrorProbEstimate is_underestimation_prob(const ModelConfig& config, const Theta& theta_star,
                                          const Theta& theta0, const PenaltySchedule& schedule,
                                          Estimator estimator, std::size_t n, std::size_t trials,
                                          std::uint64_t seed, const FitOptions& fit_options,
                                          const OrderOptions& order) {
    if (trials < 1) throw UsageError("trials must be at least 1");
    TrialSetup setup =
        make_trial_setup(config, theta_star, schedule, estimator, n, seed, fit_options, order);
    if (setup.k_star < 2) throw UsageError("underestimation needs a true order of at least 2");
    validate(config, theta0);
    if (family_of(theta0) != config.family) throw UsageError("proposal family differs from config");
    if (true_order(theta0) > setup.k_star - 1)
        throw UsageError("proposal must lie in the class of order K* - 1");
    setup.sampling = theta0;
    setup.weighted = true;
    return tally(setup, run_trials(setup, trials, order.threads));
}

ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& points) {
    return fit_on_axis(points, FitAxis::N, [](double n) { return n; });
}

ExponentFit fit_moderate_rate(const std::vector<std::pair<double, double>>& points,
                              const PenaltySchedule& schedule) {
    return fit_on_axis(points, FitAxis::Vn2OverN, [&](double n) {
        const double v = schedule.v(n);
        return v * v / n;
    });
}

Theta random_theta(const ModelConfig& config, int k, Engine& engine) {
    if (k < 1) throw UsageError("random_theta needs K >= 1");
    std::uniform_real_distribution<double> unif(config.m_lo, config.m_hi);
    switch (config.family) {
    case Family::LM: {
        ThetaLM t;
        std::exponential_distribution<double> expo(1.0);
        double total = 0.0;
        for (int j = 0; j < k; ++j) {
            t.weights.push_back(expo(engine));
            total += t.weights.back();
            t.means.push_back(unif(engine));
        }
        for (double& w : t.weights) w /= total;
        return t;
    }
    case Family::VR: {
        ThetaVR t;
        for (int j = 0; j < k; ++j) t.coeffs.push_back(unif(engine));
        return t;
    }
    case Family::AC: {
        const int cap = config.ac_depth_max >= 30 ? (1 << 30) : (1 << config.ac_depth_max);
        const int leaves = std::uniform_int_distribution<int>(1, std::min(k, cap))(engine);
        return random_tree(config, leaves, config.ac_depth_max, Rect{}, engine);
    }
    }
    throw UsageError("unknown family");
}

Theta perturb_theta(const ModelConfig& config, const Theta& theta, double scale, Engine& engine) {
    std::normal_distribution<double> noise(0.0, scale);
    if (const auto* lm = std::get_if<ThetaLM>(&theta)) {
        ThetaLM t = *lm;
        double total = 0.0;
        for (double& w : t.weights) total += (w = std::max(w, 1e-12) * std::exp(noise(engine)));
        for (double& w : t.weights) w /= total;
        for (double& m : t.means) m = config.clip(m + noise(engine));
        return t;
    }
    if (const auto* vr = std::get_if<ThetaVR>(&theta)) {
        ThetaVR t = *vr;
        for (double& c : t.coeffs) c = config.clip(c + noise(engine));
        return t;
    }
    return remark_tree(std::get<ThetaAC>(theta), 0, config, scale, engine);
}

PeelingReport peeling_assert(const Sample& sample, const ModelConfig& config, int k1, int k2,
                             const Theta& theta_star, const PeelingOptions& options) {
    const int k_star = true_order(theta_star);
    if (!(k_star <= k1 && k1 <= k2)) throw UsageError("peeling needs K* <= K1 <= K2");
    if (sample.n() < 1) throw UsageError("peeling needs a nonempty sample");
    const double n = static_cast<double>(sample.n());
    const ProfileCurve curve = profile(sample, config, k2, options.fit_options);
    const double l_star = log_likelihood(config, theta_star, sample);
    const Theta hat1 = curve.theta(k1);
    const Theta hat2 = curve.theta(k2);
    const double s1 = std::max(log_likelihood(config, hat1, sample), l_star);
    const double s2 = std::max(log_likelihood(config, hat2, sample), s1);

    PeelingReport r;
    r.right = (s2 - s1) / n;

    std::vector<Theta> probes{hat2, embed(hat1, k2), embed(theta_star, k2)};
    Engine engine = make_engine(derive_seed(options.seed, 0x9ee1ULL));
    const double spread = 0.1 * (config.m_hi - config.m_lo);
    for (int i = static_cast<int>(probes.size()); i < options.probes; ++i) {
        if (i % 2 == 0)
            probes.push_back(perturb_theta(config, hat2, spread * std::ldexp(1.0, -(i % 8)), engine));
        else
            probes.push_back(random_theta(config, k2, engine));
    }

    double sup1 = 0.0, sup2 = 0.0;
    for (const auto& theta : probes) {
        const double a = (log_likelihood(config, theta, sample) - l_star) / n;
        const double h = std::max(0.0, kl(theta_star, theta, config).value);
        const double dev = std::abs(a + h);
        sup1 = std::max(sup1, dev);
        if (h > 1e-14)
            sup2 = std::max(sup2, dev / std::sqrt(h));
        else
            ++r.skipped_zero_h;
        ++r.probes;
    }
    r.left_a1 = sup1;
    r.left_a2 = sup2 * sup2;
    r.holds_a1 = r.right <= r.left_a1 + options.tol;
    r.holds_a2 = r.right <= r.left_a2 + options.tol;
    return r;
}

std::vector<SllnPoint> slln_trace(const ModelConfig& config, const Theta& theta_star, int k,
                                  const std::vector<std::size_t>& n_grid, std::uint64_t seed,
                                  const FitOptions& fit_options) {
    if (k < 1) throw UsageError("slln_trace needs K >= 1");
    if (n_grid.empty() || n_grid.front() < 1) throw UsageError("n_grid must be nonempty and >= 1");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (n_grid[i] <= n_grid[i - 1]) throw UsageError("n_grid must be strictly increasing");
    const Sample path = simulate(config, theta_star, n_grid.back(), seed);
    const bool feasible = k >= true_order(theta_star);
    std::vector<SllnPoint> out;
    for (std::size_t n : n_grid) {
        const Sample s = path.prefix(n);
        const double l_star = log_likelihood(config, theta_star, s);
        double sup = fit(s, k, config, fit_options).loglik;
        if (feasible) sup = std::max(sup, l_star);
        out.push_back({n, (sup - l_star) / static_cast<double>(n)});
    }
    return out;
}

} // namespace pmlorder
