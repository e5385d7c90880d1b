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

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "pmlorder/model.hpp"

namespace pmlorder {

struct FitOptions {
    int starts = 10;        // EM initializations (LM only)
    double tol = 1e-9;      // EM log-likelihood gain / VR coordinate change
    int max_iter = 2000;    // EM iterations per start
    int k_hard_cap = 32;
    std::uint64_t seed = 0; // EM start jitter
};

struct FitResult {
    Theta theta_hat;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    int starts_used = 0;
    /// Smallest per-iteration log-likelihood change seen across all EM runs.
    double worst_step = 0.0;
};

/// One EM run with known sigma. `trace` holds the log-likelihood of the
/// initial point followed by one entry per iteration.
struct EmRun {
    ThetaLM theta;
    std::vector<double> trace;
    bool converged = false;
    int iterations = 0;
};

EmRun run_em(const Sample& sample, const ModelConfig& config, ThetaLM init, double tol,
             int max_iter);

/// Multi-start EM for the K-component location mixture. `extra_starts` are
/// tried before the quantile-spread starts.
FitResult fit_lm_em(const Sample& sample, int k, const ModelConfig& config,
                    const FitOptions& options, const std::vector<ThetaLM>& extra_starts = {});

/// Box-constrained least squares on the first K cosine functions, by cyclic
/// coordinate descent. The objective is convex so the result is the global
/// maximizer of the log-likelihood over M^K.
FitResult fit_vr(const Sample& sample, int k, const ModelConfig& config, double tol = 1e-12,
                 const ThetaVR* warm_start = nullptr);

/// Exact maximizer over guillotine trees with at most K leaves and depth at
/// most config.ac_depth_max, cutting only at midpoints between in-cell data.
FitResult fit_ac(const Sample& sample, int k, const ModelConfig& config);

/// fit_ac for every K in 1..k_top from a single dynamic program.
std::vector<FitResult> fit_ac_all(const Sample& sample, int k_top, const ModelConfig& config);

FitResult fit(const Sample& sample, int k, const ModelConfig& config, const FitOptions& options);

struct ProfileEntry {
    int k = 0;
    double loglik_sup = 0.0;
    Theta theta_hat;
    bool converged = false;
    int iterations = 0;
};

/// sup over Theta_K of the log-likelihood for K = 1..k_top, nondecreasing in K.
struct ProfileCurve {
    std::vector<ProfileEntry> entries;

    int k_top() const { return static_cast<int>(entries.size()); }
    double loglik(int k) const { return entries.at(k - 1).loglik_sup; }
    const Theta& theta(int k) const { return entries.at(k - 1).theta_hat; }
};

/// For AC, entries beyond 2^ac_depth_max repeat the leaf-cap fit.
ProfileCurve profile(const Sample& sample, const ModelConfig& config, int k_top,
                     const FitOptions& options = {});

/// CSV with header "K,loglik,converged,iterations".
void write_profile_csv(std::ostream& out, const ProfileCurve& curve);

} // namespace pmlorder
