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
#include <string_view>
#include <variant>
#include <vector>

namespace pmlorder {

enum class Family { LM, AC, VR };
enum class Basis { Cosine };

std::string_view to_string(Family family);
Family parse_family(std::string_view text);

/// Fixed part of a model family: the known noise scale, the compact set
/// M = [m_lo, m_hi] for means/coefficients/marks, and family-specific knobs.
struct ModelConfig {
    Family family = Family::VR;
    double sigma = 1.0;
    double m_lo = -3.0;
    double m_hi = 3.0;
    Basis vr_basis = Basis::Cosine;
    int ac_depth_max = 2;

    void validate() const;
    double clip(double m) const;
    bool in_range(double m) const { return m >= m_lo && m <= m_hi; }
};

/// Location mixture: K weights on the simplex and K means in M.
struct ThetaLM {
    std::vector<double> weights;
    std::vector<double> means;
};

/// Coefficients on the cosine system t_k(x) = sqrt(2) cos(k pi x).
struct ThetaVR {
    std::vector<double> coeffs;
};

/// Axis-aligned rectangle in [0,1]^2, half-open on the upper side except at 1.
struct Rect {
    double lo[2] = {0.0, 0.0};
    double hi[2] = {1.0, 1.0};

    double area() const { return (hi[0] - lo[0]) * (hi[1] - lo[1]); }
    Rect intersect(const Rect& other) const;
};

struct Cell {
    Rect rect;
    double mark = 0.0;
};

/// Marked guillotine partition of [0,1]^2. Internal nodes cut along an axis
/// (1 or 2): the left child holds x_axis < cut, the right child the rest.
class ThetaAC {
public:
    struct Node {
        int axis = 0;
        double cut = 0.0;
        int left = -1;
        int right = -1;
        double mark = 0.0;

        bool is_leaf() const { return left < 0; }
    };

    ThetaAC() : nodes_{Node{}} {}

    static ThetaAC leaf(double mark);
    static ThetaAC split(int axis, double cut, const ThetaAC& left, const ThetaAC& right);

    const std::vector<Node>& nodes() const { return nodes_; }
    int leaf_count() const;
    int depth() const;
    double eval(double x1, double x2) const;
    std::vector<Cell> cells() const;

    /// Tree with leaves that share a parent and a mark merged, repeatedly.
    ThetaAC simplified() const;

private:
    explicit ThetaAC(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

    std::vector<Node> nodes_;
};

using Theta = std::variant<ThetaLM, ThetaVR, ThetaAC>;

Family family_of(const Theta& theta);

/// Index K of the smallest class Theta_K the parameter is written in:
/// components for LM, coefficients for VR, leaves for AC.
int class_index(const Theta& theta);

/// Lowest K such that P_theta lies in Pi_K.
int true_order(const Theta& theta);

/// Throws DomainError when theta does not belong to config's parameter space.
void validate(const ModelConfig& config, const Theta& theta);

/// Rewrites theta as an element of Theta_K (K >= class_index) with the same
/// density: zero-weight components for LM, zero coefficients for VR, and the
/// identity for AC (Theta_K there already means "at most K leaves").
Theta embed(const Theta& theta, int k);

struct Observation {
    double x1 = 0.0;
    double x2 = 0.0;
    double y = 0.0;
};

/// n observations. LM stores z_i in y; VR uses x1; AC uses x1 and x2.
struct Sample {
    Family family = Family::VR;
    std::uint64_t seed = 0;
    std::vector<double> x1;
    std::vector<double> x2;
    std::vector<double> y;

    std::size_t n() const { return y.size(); }
    Observation at(std::size_t i) const;
    Sample prefix(std::size_t m) const;
};

double basis_fn(int k, double x);

Sample simulate(const ModelConfig& config, const Theta& theta_star, std::size_t n,
                std::uint64_t seed);

double log_density(const ModelConfig& config, const Theta& theta, const Observation& z);
double log_likelihood(const ModelConfig& config, const Theta& theta, const Sample& sample);
double eval_regression_fn(const ModelConfig& config, const Theta& theta, double x1,
                          double x2 = 0.0);

double log_gauss(double y, double mean, double sigma);

} // namespace pmlorder
