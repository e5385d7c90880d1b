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
#include <string_view>
#include <vector>

#include "pmlorder/model.hpp"

namespace pmlorder {

enum class EntropyMethod { ClosedForm, Quadrature, Optimized };

std::string_view to_string(EntropyMethod method);

/// A relative entropy in nats together with how it was obtained and the
/// numerical tolerance attached to it.
struct EntropyValue {
    double value = 0.0;
    EntropyMethod method = EntropyMethod::ClosedForm;
    double tol = 0.0;
};

struct QuadOptions {
    double half_width_sigmas = 12.0;
    int panels = 400;
    int max_panels = 400 * 64;
    double target = 1e-8; // stop once successive refinements differ by less
};

/// H(P_a | P_b) for the Gaussian regression families. With a uniform design
/// and known sigma this is ||f_a - f_b||^2 / (2 sigma^2): a coefficient
/// distance for VR, an area-weighted sum over the overlay partition for AC.
EntropyValue kl_regression(const Theta& a, const Theta& b, const ModelConfig& config);

/// H(P_a | P_b) for two location mixtures, by composite Gauss-Legendre
/// panels with doubling until two refinements agree.
EntropyValue kl_mixture_quadrature(const ThetaLM& a, const ThetaLM& b, const ModelConfig& config,
                                   const QuadOptions& quad = {});

/// Dispatches to kl_regression or kl_mixture_quadrature.
EntropyValue kl(const Theta& a, const Theta& b, const ModelConfig& config);

struct ProjectionOptions {
    int starts = 10;
    std::uint64_t seed = 0;
    int max_evals = 4000;
    double simplex_size = 1e-9;
    QuadOptions quad;
};

struct Projection {
    EntropyValue entropy;
    Theta argmin;
};

/// H(P* | Pi_K): the infimum over theta in Theta_K of H(P* | P_theta).
Projection project_entropy(const ModelConfig& config, const Theta& target, int k,
                           const ProjectionOptions& options = {});

/// H(Pi_K | P*): the infimum over theta in Theta_K of H(P_theta | P*), the
/// best achievable underestimation exponent when K = K* - 1.
Projection stein_bound(const ModelConfig& config, const Theta& target, int k,
                       const ProjectionOptions& options = {});

/// H(P|Q) - H(P|Q') - H(Q'|Q). Nonnegative for every P in a convex set
/// exactly when Q' is the H-projection of Q on that set.
double pythagorean_residual(const Theta& p, const Theta& q_prime, const Theta& q,
                            const ModelConfig& config);

struct ReversedProjectionReport {
    double min_residual_entropy = 0.0; // H(Q|P_t) - H(Q|P_bar) - H(P_bar|P_t)
    double min_residual_inner = 0.0;   // (bar - t)^T (q_head - bar)
    bool accepted = false;
    int probes = 0;
};

/// Checks whether theta_bar is the reversed H-projection of the VR density
/// with coefficients q onto Theta_{K*}, K* = theta_bar.size(), over a probe set.
ReversedProjectionReport reversed_projection_check_vr(const ThetaVR& q, const ThetaVR& theta_bar,
                                                      const std::vector<ThetaVR>& probes,
                                                      const ModelConfig& config,
                                                      double tol = 1e-10);

/// per_axis^K points on the regular grid over M^K (endpoints included).
std::vector<ThetaVR> probe_grid_vr(const ModelConfig& config, int k, int per_axis);

} // namespace pmlorder
