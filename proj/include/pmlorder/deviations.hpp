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
#include <functional>
#include <string_view>
#include <utility>
#include <vector>

#include "pmlorder/criterion.hpp"
#include "pmlorder/entropy.hpp"
#include "pmlorder/mle.hpp"
#include "pmlorder/model.hpp"
#include "pmlorder/rng.hpp"

namespace pmlorder {

enum class Estimator { Local, Global };

std::string_view to_string(Estimator estimator);
Estimator parse_estimator(std::string_view text);

enum class ProbMethod { PlainMc, ImportanceSampling };

std::string_view to_string(ProbMethod method);

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double p) const { return p >= lo && p <= hi; }
};

inline constexpr double kZ95 = 1.959963984540054;

/// Wilson score interval for `successes` out of `trials`.
Interval wilson(std::size_t successes, std::size_t trials, double z = kZ95);

struct ErrorProbEstimate {
    std::size_t n = 0;
    std::size_t trials = 0;
    double p_under = 0.0;
    double p_over = 0.0;
    double p_correct = 0.0;
    Interval ci_under;
    Interval ci_over;
    Interval ci_correct;
    ProbMethod method = ProbMethod::PlainMc;
    double ess = 0.0;
    /// Importance sampling only: log of p_under (may be far below the double range of p_under)
    /// and its standard error on the probability scale.
    double log_p_under = 0.0;
    double se_under = 0.0;
    bool reliable = true;
};

struct OrderOptions {
    int k_max = 0;      // 0: K* + 2
    int k_scan_max = 0; // 0: 2 * k_max
    int threads = 0;    // 0: hardware concurrency
};

/// Everything one trial needs; trial t draws from `sampling` with seed
/// derive_seed(seed, t).
struct TrialSetup {
    ModelConfig config;
    Theta theta_star;
    Theta sampling;
    PenaltySchedule schedule;
    Estimator estimator = Estimator::Global;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    FitOptions fit_options;
    int k_star = 1;
    int k_max = 1;
    int k_scan_max = 1;
    bool weighted = false;
};

struct TrialOutcome {
    std::size_t index = 0;
    int k_local = 1;
    int k_global = 1;
    bool cap_hit = false;
    double log_weight = 0.0; // log dP*/dP_sampling of the sample, 0 for plain MC

    int k_hat(Estimator e) const { return e == Estimator::Local ? k_local : k_global; }
};

TrialSetup make_trial_setup(const ModelConfig& config, const Theta& theta_star,
                            const PenaltySchedule& schedule, Estimator estimator, std::size_t n,
                            std::uint64_t seed, const FitOptions& fit_options,
                            const OrderOptions& order = {});

TrialOutcome run_trial(const TrialSetup& setup, std::size_t index);

/// Runs body(i) for i in [0, count) over `threads` workers (0: all cores).
/// The first exception thrown by any call is rethrown after all workers join.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

/// Outcomes in trial-index order regardless of scheduling.
std::vector<TrialOutcome> run_trials(const TrialSetup& setup, std::size_t trials, int threads = 0);

/// Aggregates outcomes; the result does not depend on their order.
ErrorProbEstimate tally(const TrialSetup& setup, const std::vector<TrialOutcome>& outcomes);

ErrorProbEstimate mc_error_probs(const ModelConfig& config, const Theta& theta_star,
                                 const PenaltySchedule& schedule, Estimator estimator,
                                 std::size_t n, std::size_t trials, std::uint64_t seed,
                                 const FitOptions& fit_options = {},
                                 const OrderOptions& order = {});

/// Projection of theta_star onto Theta_{K*-1}: the default proposal.
Theta default_proposal(const ModelConfig& config, const Theta& theta_star,
                       const ProjectionOptions& options = {});

/// Samples from theta0 and reweights {K_hat < K*} by exp(l_n(theta*) - l_n(theta0)).
/// `ess` is (sum w)^2 / sum w^2 over the weights of the trials in the event.
ErrorProbEstimate is_underestimation_prob(const ModelConfig& config, const Theta& theta_star,
                                          const Theta& theta0, const PenaltySchedule& schedule,
                                          Estimator estimator, std::size_t n, std::size_t trials,
                                          std::uint64_t seed, const FitOptions& fit_options = {},
                                          const OrderOptions& order = {});

enum class FitAxis { N, Vn2OverN };

std::string_view to_string(FitAxis axis);

struct ExponentFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_se = 0.0;
    FitAxis x_axis = FitAxis::N;
    std::vector<std::pair<double, double>> points; // (x, -log p_hat)
    int excluded = 0;
};

/// Least squares of -log p_hat on n over points with p_hat in (0, 1).
ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& points);

/// Least squares of -log p_hat on v_n^2 / n.
ExponentFit fit_moderate_rate(const std::vector<std::pair<double, double>>& points,
                              const PenaltySchedule& schedule);

/// Uniform draw from Theta_K (LM weights from a flat Dirichlet; AC depth and
/// leaf budget respected).
Theta random_theta(const ModelConfig& config, int k, Engine& engine);

/// Gaussian perturbation of the continuous coordinates, kept inside Theta_K.
Theta perturb_theta(const ModelConfig& config, const Theta& theta, double scale, Engine& engine);

struct PeelingOptions {
    int probes = 200;
    std::uint64_t seed = 0;
    double tol = 1e-9;
    FitOptions fit_options;
};

struct PeelingReport {
    double right = 0.0;   // (sup l_n over Theta_K2 - sup over Theta_K1) / n
    double left_a1 = 0.0; // max |(P_n - P*)(l_theta - l*)|
    double left_a2 = 0.0; // (max |(P_n - P*)(l_theta - l*)| / H(theta)^(1/2))^2
    bool holds_a1 = false;
    bool holds_a2 = false;
    int probes = 0;
    int skipped_zero_h = 0;

    bool holds() const { return holds_a1 && holds_a2; }
};

/// Both peeling inequalities on one sample, with suprema over Theta_K2
/// approximated from below by the fitted parameter and a probe cloud.
PeelingReport peeling_assert(const Sample& sample, const ModelConfig& config, int k1, int k2,
                             const Theta& theta_star, const PeelingOptions& options = {});

struct SllnPoint {
    std::size_t n = 0;
    double value = 0.0; // sup over Theta_K of (l_n(theta) - l_n(theta*)) / n
};

/// One sample path of length max(n_grid), evaluated on its prefixes.
std::vector<SllnPoint> slln_trace(const ModelConfig& config, const Theta& theta_star, int k,
                                  const std::vector<std::size_t>& n_grid, std::uint64_t seed,
                                  const FitOptions& fit_options = {});

} // namespace pmlorder
