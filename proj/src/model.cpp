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
#include "pmlorder/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "pmlorder/errors.hpp"
#include "pmlorder/rng.hpp"

namespace pmlorder {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178; // log(sqrt(2 pi))

std::string str(double v) { return std::to_string(v); }

} // namespace

std::string_view to_string(Family family) {
    switch (family) {
    case Family::LM: return "LM";
    case Family::AC: return "AC";
    case Family::VR: return "VR";
    }
    return "?";
}

Family parse_family(std::string_view text) {
    if (text == "LM") return Family::LM;
    if (text == "AC") return Family::AC;
    if (text == "VR") return Family::VR;
    throw ParseError("family", "unknown family '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("sigma must be positive");
    if (!(m_lo < m_hi)) throw DomainError("m_lo must be below m_hi");
    if (m_lo > 0.0 || m_hi < 0.0) throw DomainError("M = [m_lo, m_hi] must contain 0");
    if (ac_depth_max < 1) throw DomainError("ac_depth_max must be at least 1");
}

double ModelConfig::clip(double m) const { return std::clamp(m, m_lo, m_hi); }

Rect Rect::intersect(const Rect& other) const {
    Rect r;
    for (int a = 0; a < 2; ++a) {
        r.lo[a] = std::max(lo[a], other.lo[a]);
        r.hi[a] = std::max(r.lo[a], std::min(hi[a], other.hi[a]));
    }
    return r;
}

// ---------------------------------------------------------------------------
// ThetaAC

ThetaAC ThetaAC::leaf(double mark) {
    Node node;
    node.mark = mark;
    return ThetaAC(std::vector<Node>{node});
}

ThetaAC ThetaAC::split(int axis, double cut, const ThetaAC& left, const ThetaAC& right) {
    std::vector<Node> nodes;
    nodes.reserve(1 + left.nodes_.size() + right.nodes_.size());
    Node root;
    root.axis = axis;
    root.cut = cut;
    nodes.push_back(root);
    auto append = [&nodes](const std::vector<Node>& sub) {
        const int offset = static_cast<int>(nodes.size());
        for (Node n : sub) {
            if (!n.is_leaf()) {
                n.left += offset;
                n.right += offset;
            }
            nodes.push_back(n);
        }
        return offset;
    };
    nodes[0].left = append(left.nodes_);
    nodes[0].right = append(right.nodes_);
    return ThetaAC(std::move(nodes));
}

int ThetaAC::leaf_count() const {
    return static_cast<int>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.is_leaf(); }));
}

int ThetaAC::depth() const {
    auto rec = [this](auto&& self, int i) -> int {
        const Node& n = nodes_[i];
        if (n.is_leaf()) return 0;
        return 1 + std::max(self(self, n.left), self(self, n.right));
    };
    return rec(rec, 0);
}

double ThetaAC::eval(double x1, double x2) const {
    int i = 0;
    while (!nodes_[i].is_leaf()) {
        const Node& n = nodes_[i];
        const double x = n.axis == 1 ? x1 : x2;
        i = x < n.cut ? n.left : n.right;
    }
    return nodes_[i].mark;
}

std::vector<Cell> ThetaAC::cells() const {
    std::vector<Cell> out;
    auto rec = [&](auto&& self, int i, Rect r) -> void {
        const Node& n = nodes_[i];
        if (n.is_leaf()) {
            out.push_back({r, n.mark});
            return;
        }
        const int a = n.axis - 1;
        Rect left = r, right = r;
        left.hi[a] = std::min(r.hi[a], n.cut);
        right.lo[a] = std::max(r.lo[a], n.cut);
        self(self, n.left, left);
        self(self, n.right, right);
    };
    rec(rec, 0, Rect{});
    return out;
}

ThetaAC ThetaAC::simplified() const {
    auto rec = [this](auto&& self, int i) -> ThetaAC {
        const Node& n = nodes_[i];
        if (n.is_leaf()) return leaf(n.mark);
        ThetaAC l = self(self, n.left);
        ThetaAC r = self(self, n.right);
        if (l.nodes_.size() == 1 && r.nodes_.size() == 1 && l.nodes_[0].mark == r.nodes_[0].mark)
            return leaf(l.nodes_[0].mark);
        return split(n.axis, n.cut, l, r);
    };
    return rec(rec, 0);
}

// ---------------------------------------------------------------------------
// Parameters

Family family_of(const Theta& theta) {
    switch (theta.index()) {
    case 0: return Family::LM;
    case 1: return Family::VR;
    default: return Family::AC;
    }
}

int class_index(const Theta& theta) {
    if (const auto* lm = std::get_if<ThetaLM>(&theta)) return static_cast<int>(lm->weights.size());
    if (const auto* vr = std::get_if<ThetaVR>(&theta)) return static_cast<int>(vr->coeffs.size());
    return std::get<ThetaAC>(theta).leaf_count();
}

int true_order(const Theta& theta) {
    if (const auto* lm = std::get_if<ThetaLM>(&theta)) {
        std::vector<double> support;
        for (std::size_t k = 0; k < lm->weights.size(); ++k)
            if (lm->weights[k] > 0.0) support.push_back(lm->means[k]);
        std::sort(support.begin(), support.end());
        support.erase(std::unique(support.begin(), support.end()), support.end());
        return std::max<int>(1, static_cast<int>(support.size()));
    }
    if (const auto* vr = std::get_if<ThetaVR>(&theta)) {
        int k = static_cast<int>(vr->coeffs.size());
        while (k > 1 && vr->coeffs[k - 1] == 0.0) --k;
        return std::max(k, 1);
    }
    return std::get<ThetaAC>(theta).simplified().leaf_count();
}

void validate(const ModelConfig& config, const Theta& theta) {
    if (family_of(theta) != config.family)
        throw DomainError("parameter family " + std::string(to_string(family_of(theta))) +
                          " does not match model family " +
                          std::string(to_string(config.family)));
    if (const auto* lm = std::get_if<ThetaLM>(&theta)) {
        if (lm->weights.empty()) throw DomainError("LM parameter needs K >= 1 components");
        if (lm->weights.size() != lm->means.size())
            throw DomainError("LM weights and means differ in length");
        double total = 0.0;
        for (std::size_t k = 0; k < lm->weights.size(); ++k) {
            if (!(lm->weights[k] >= 0.0)) throw DomainError("LM weight is negative");
            if (!config.in_range(lm->means[k]))
                throw DomainError("LM mean " + str(lm->means[k]) + " outside M");
            total += lm->weights[k];
        }
        if (std::abs(total - 1.0) > 1e-12) throw DomainError("LM weights do not sum to 1");
        return;
    }
    if (const auto* vr = std::get_if<ThetaVR>(&theta)) {
        if (vr->coeffs.empty()) throw DomainError("VR parameter needs K >= 1 coefficients");
        for (double c : vr->coeffs)
            if (!config.in_range(c)) throw DomainError("VR coefficient " + str(c) + " outside M");
        return;
    }
    const auto& ac = std::get<ThetaAC>(theta);
    if (ac.depth() > config.ac_depth_max)
        throw DomainError("AC tree deeper than ac_depth_max");
    const auto& nodes = ac.nodes();
    auto rec = [&](auto&& self, int i, Rect r) -> void {
        const auto& n = nodes[i];
        if (n.is_leaf()) {
            if (!config.in_range(n.mark)) throw DomainError("AC mark " + str(n.mark) + " outside M");
            return;
        }
        if (n.axis != 1 && n.axis != 2) throw DomainError("AC cut axis must be 1 or 2");
        const int a = n.axis - 1;
        if (!(n.cut > r.lo[a] && n.cut < r.hi[a]))
            throw DomainError("AC cut " + str(n.cut) + " outside its cell");
        Rect left = r, right = r;
        left.hi[a] = n.cut;
        right.lo[a] = n.cut;
        self(self, n.left, left);
        self(self, n.right, right);
    };
    rec(rec, 0, Rect{});
}

Theta embed(const Theta& theta, int k) {
    if (k < class_index(theta)) throw UsageError("cannot embed into a smaller class");
    if (const auto* lm = std::get_if<ThetaLM>(&theta)) {
        ThetaLM out = *lm;
        const double filler = out.means.back();
        out.weights.resize(k, 0.0);
        out.means.resize(k, filler);
        return out;
    }
    if (const auto* vr = std::get_if<ThetaVR>(&theta)) {
        ThetaVR out = *vr;
        out.coeffs.resize(k, 0.0);
        return out;
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Samples and densities

Observation Sample::at(std::size_t i) const {
    Observation o;
    o.y = y[i];
    if (!x1.empty()) o.x1 = x1[i];
    if (!x2.empty()) o.x2 = x2[i];
    return o;
}

Sample Sample::prefix(std::size_t m) const {
    m = std::min(m, n());
    Sample s;
    s.family = family;
    s.seed = seed;
    s.y.assign(y.begin(), y.begin() + m);
    if (!x1.empty()) s.x1.assign(x1.begin(), x1.begin() + m);
    if (!x2.empty()) s.x2.assign(x2.begin(), x2.begin() + m);
    return s;
}

double basis_fn(int k, double x) { return std::numbers::sqrt2 * std::cos(k * std::numbers::pi * x); }

double log_gauss(double y, double mean, double sigma) {
    const double r = (y - mean) / sigma;
    return -kLogSqrt2Pi - std::log(sigma) - 0.5 * r * r;
}

Sample simulate(const ModelConfig& config, const Theta& theta_star, std::size_t n,
                std::uint64_t seed) {
    config.validate();
    validate(config, theta_star);
    if (n < 1) throw UsageError("simulate needs n >= 1");

    Engine engine = make_engine(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Sample s;
    s.family = config.family;
    s.seed = seed;
    s.y.resize(n);

    switch (config.family) {
    case Family::LM: {
        const auto& lm = std::get<ThetaLM>(theta_star);
        std::vector<double> cumulative(lm.weights.size());
        std::partial_sum(lm.weights.begin(), lm.weights.end(), cumulative.begin());
        std::size_t last_live = lm.weights.size() - 1;
        while (last_live > 0 && lm.weights[last_live] == 0.0) --last_live;
        for (std::size_t i = 0; i < n; ++i) {
            const double u = unif(engine) * cumulative.back();
            auto k = static_cast<std::size_t>(
                std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
            k = std::min(k, last_live);
            s.y[i] = lm.means[k] + config.sigma * normal(engine);
        }
        break;
    }
    case Family::VR: {
        s.x1.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            s.x1[i] = unif(engine);
            s.y[i] = eval_regression_fn(config, theta_star, s.x1[i]) + config.sigma * normal(engine);
        }
        break;
    }
    case Family::AC: {
        const auto& ac = std::get<ThetaAC>(theta_star);
        s.x1.resize(n);
        s.x2.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            s.x1[i] = unif(engine);
            s.x2[i] = unif(engine);
            s.y[i] = ac.eval(s.x1[i], s.x2[i]) + config.sigma * normal(engine);
        }
        break;
    }
    }
    return s;
}

double eval_regression_fn(const ModelConfig& config, const Theta& theta, double x1, double x2) {
    if (config.family == Family::LM || family_of(theta) == Family::LM)
        throw UsageError("regression function undefined for the LM family");
    if (const auto* vr = std::get_if<ThetaVR>(&theta)) {
        double f = 0.0;
        for (std::size_t k = 0; k < vr->coeffs.size(); ++k)
            f += vr->coeffs[k] * basis_fn(static_cast<int>(k) + 1, x1);
        return f;
    }
    return std::get<ThetaAC>(theta).eval(x1, x2);
}

double log_density(const ModelConfig& config, const Theta& theta, const Observation& z) {
    if (const auto* lm = std::get_if<ThetaLM>(&theta)) {
        double top = -std::numeric_limits<double>::infinity();
        const std::size_t k_count = lm->weights.size();
        double terms[64];
        std::vector<double> spill;
        double* t = terms;
        if (k_count > 64) {
            spill.resize(k_count);
            t = spill.data();
        }
        for (std::size_t k = 0; k < k_count; ++k) {
            t[k] = lm->weights[k] > 0.0
                       ? std::log(lm->weights[k]) + log_gauss(z.y, lm->means[k], config.sigma)
                       : -std::numeric_limits<double>::infinity();
            top = std::max(top, t[k]);
        }
        if (!std::isfinite(top)) return top;
        double acc = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) acc += std::exp(t[k] - top);
        return top + std::log(acc);
    }
    return log_gauss(z.y, eval_regression_fn(config, theta, z.x1, z.x2), config.sigma);
}

double log_likelihood(const ModelConfig& config, const Theta& theta, const Sample& sample) {
    if (sample.family != config.family || family_of(theta) != config.family)
        throw UsageError("sample family does not match model family");
    double total = 0.0;
    for (std::size_t i = 0; i < sample.n(); ++i) total += log_density(config, theta, sample.at(i));
    return total;
}

} // namespace pmlorder
