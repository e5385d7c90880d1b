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
#include "pmlorder/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "pmlorder/errors.hpp"
#include "pmlorder/io.hpp"
#include "pmlorder/rng.hpp"

namespace pmlorder {

namespace {

constexpr double kTie = 1e-12;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_family(const Sample& sample, const ModelConfig& config, Family expected) {
    if (config.family != expected || sample.family != expected)
        throw UsageError("fitter called on the wrong family");
}

// ---------------------------------------------------------------------------
// LM

/// Responsibilities of the current parameter plus its log-likelihood.
double e_step(const std::vector<double>& z, const ModelConfig& config, const ThetaLM& theta,
              std::vector<double>& mass, std::vector<double>& moment) {
    const std::size_t k_count = theta.weights.size();
    std::vector<double> log_w(k_count), t(k_count);
    for (std::size_t k = 0; k < k_count; ++k)
        log_w[k] = theta.weights[k] > 0.0 ? std::log(theta.weights[k]) : kNegInf;
    mass.assign(k_count, 0.0);
    moment.assign(k_count, 0.0);
    double loglik = 0.0;
    for (double zi : z) {
        double top = kNegInf;
        for (std::size_t k = 0; k < k_count; ++k) {
            t[k] = std::isfinite(log_w[k]) ? log_w[k] + log_gauss(zi, theta.means[k], config.sigma)
                                           : kNegInf;
            top = std::max(top, t[k]);
        }
        double acc = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            t[k] = std::isfinite(t[k]) ? std::exp(t[k] - top) : 0.0;
            acc += t[k];
        }
        loglik += top + std::log(acc);
        for (std::size_t k = 0; k < k_count; ++k) {
            const double r = t[k] / acc;
            mass[k] += r;
            moment[k] += r * zi;
        }
    }
    return loglik;
}

void normalize(ThetaLM& theta, const ModelConfig& config) {
    const double total = std::accumulate(theta.weights.begin(), theta.weights.end(), 0.0);
    for (auto& w : theta.weights) w = total > 0.0 ? w / total : 1.0 / theta.weights.size();
    for (auto& m : theta.means) m = config.clip(m);
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    q = std::clamp(q, 0.0, 1.0);
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<ThetaLM> quantile_starts(const std::vector<double>& z, int k, int starts,
                                     const ModelConfig& config, std::uint64_t seed) {
    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end());
    std::vector<ThetaLM> out;
    for (int s = 0; s < starts; ++s) {
        Engine engine = make_engine(derive_seed(seed, static_cast<std::uint64_t>(s)));
        std::uniform_real_distribution<double> shift(-0.5, 0.5);
        std::normal_distribution<double> jitter(0.0, 0.25 * config.sigma);
        ThetaLM theta;
        theta.weights.assign(k, 1.0 / k);
        for (int j = 0; j < k; ++j) {
            double q = (j + 0.5) / k;
            double m = 0.0;
            if (s == 0) {
                m = quantile_sorted(sorted, q);
            } else {
                q = (j + 0.5 + shift(engine)) / k;
                m = quantile_sorted(sorted, q) + jitter(engine);
            }
            theta.means.push_back(config.clip(m));
        }
        out.push_back(std::move(theta));
    }
    return out;
}

// ---------------------------------------------------------------------------
// VR

/// Gram matrix and right-hand side of the least-squares problem on the
/// first k_top cosine functions, plus the basis values for residuals.
struct VrDesign {
    int k_top = 0;
    std::size_t n = 0;
    std::vector<double> basis; // n * k_top, row-major
    std::vector<double> gram;  // k_top * k_top
    std::vector<double> rhs;   // k_top

    VrDesign(const Sample& sample, int k) : k_top(k), n(sample.n()) {
        basis.resize(n * k_top);
        gram.assign(static_cast<std::size_t>(k_top) * k_top, 0.0);
        rhs.assign(k_top, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* row = &basis[i * k_top];
            // cos(k a) by the Chebyshev recurrence.
            const double c1 = std::cos(std::numbers::pi * sample.x1[i]);
            double prev = 1.0, cur = c1;
            for (int j = 0; j < k_top; ++j) {
                row[j] = std::numbers::sqrt2 * cur;
                const double next = 2.0 * c1 * cur - prev;
                prev = cur;
                cur = next;
            }
            for (int a = 0; a < k_top; ++a) {
                rhs[a] += row[a] * sample.y[i];
                for (int b = a; b < k_top; ++b) gram[a * k_top + b] += row[a] * row[b];
            }
        }
        for (int a = 0; a < k_top; ++a)
            for (int b = 0; b < a; ++b) gram[a * k_top + b] = gram[b * k_top + a];
    }

    double g(int a, int b) const { return gram[a * k_top + b]; }
};

FitResult solve_vr(const VrDesign& design, const Sample& sample, int k, const ModelConfig& config,
                   double tol, const ThetaVR* warm) {
    std::vector<double> theta(k, 0.0);
    if (warm)
        for (int j = 0; j < k && j < static_cast<int>(warm->coeffs.size()); ++j)
            theta[j] = config.clip(warm->coeffs[j]);
    constexpr int kMaxSweeps = 100000;
    int sweep = 0;
    bool converged = false;
    while (sweep < kMaxSweeps) {
        ++sweep;
        double max_change = 0.0;
        for (int a = 0; a < k; ++a) {
            const double gaa = design.g(a, a);
            if (!(gaa > 0.0)) continue;
            double r = design.rhs[a];
            for (int b = 0; b < k; ++b)
                if (b != a) r -= design.g(a, b) * theta[b];
            const double updated = config.clip(r / gaa);
            max_change = std::max(max_change, std::abs(updated - theta[a]));
            theta[a] = updated;
        }
        if (max_change < tol) {
            converged = true;
            break;
        }
    }
    FitResult result;
    result.theta_hat = ThetaVR{theta};
    double loglik = 0.0;
    for (std::size_t i = 0; i < design.n; ++i) {
        const double* row = &design.basis[i * design.k_top];
        double f = 0.0;
        for (int j = 0; j < k; ++j) f += theta[j] * row[j];
        loglik += log_gauss(sample.y[i], f, config.sigma);
    }
    result.loglik = loglik;
    result.iterations = sweep;
    result.converged = converged;
    result.starts_used = 1;
    return result;
}

// ---------------------------------------------------------------------------
// AC

struct CellKey {
    int lo[2];
    int hi[2];

    bool operator==(const CellKey& o) const {
        return lo[0] == o.lo[0] && lo[1] == o.lo[1] && hi[0] == o.hi[0] && hi[1] == o.hi[1];
    }
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& c) const noexcept {
        std::uint64_t h = splitmix64(static_cast<std::uint64_t>(c.lo[0]) << 32 | c.hi[0]);
        return static_cast<std::size_t>(splitmix64(h ^ (static_cast<std::uint64_t>(c.lo[1]) << 32 | c.hi[1])));
    }
};

struct Choice {
    double sse = std::numeric_limits<double>::infinity();
    int axis = 0; // 0: leaf
    double cut = 0.0;
    CellKey left{}, right{};
    int k_left = 0, k_right = 0;
    double mark = 0.0;
};

struct Stats {
    double count = 0.0, sum = 0.0, sumsq = 0.0;
};

class AcSolver {
public:
    AcSolver(const Sample& sample, const ModelConfig& config, int k_top)
        : sample_(sample), config_(config), k_top_(k_top), n_(static_cast<int>(sample.n())) {
        for (int a = 0; a < 2; ++a) {
            order_[a].resize(n_);
            std::iota(order_[a].begin(), order_[a].end(), 0);
            const auto& x = coord(a);
            std::stable_sort(order_[a].begin(), order_[a].end(),
                             [&x](int i, int j) { return x[i] < x[j]; });
            rank_[a].resize(n_);
            for (int r = 0; r < n_; ++r) rank_[a][order_[a][r]] = r;
        }
        memo_.resize(config.ac_depth_max + 1);
    }

    CellKey root() const { return CellKey{{0, 0}, {n_, n_}}; }

    int capacity(int depth_left) const {
        const long long cap = depth_left >= 30 ? (1LL << 30) : (1LL << depth_left);
        return static_cast<int>(std::min<long long>(cap, k_top_));
    }

    const std::vector<Choice>& solve(const CellKey& cell, int depth_left) {
        auto& memo = memo_[depth_left];
        if (auto it = memo.find(cell); it != memo.end()) return it->second;

        const int kcap = capacity(depth_left);
        std::vector<Choice> best(kcap + 1);
        std::vector<int> along[2];
        along[0] = points_along(cell, 0);
        const Stats total = stats_of(along[0]);
        best[1] = leaf_choice(total);

        const int child_cap = depth_left > 0 ? std::min(capacity(depth_left - 1), kcap - 1) : 0;
        if (depth_left > 0 && kcap >= 2 && along[0].size() >= 2) {
            along[1] = points_along(cell, 1);
            for (int a = 0; a < 2; ++a) {
                const auto& pts = along[a];
                const auto& x = coord(a);
                Stats left;
                for (std::size_t j = 1; j < pts.size(); ++j) {
                    const double yv = sample_.y[pts[j - 1]];
                    left.count += 1.0;
                    left.sum += yv;
                    left.sumsq += yv * yv;
                    const double xa = x[pts[j - 1]], xb = x[pts[j]];
                    if (!(xa < xb)) continue;
                    Choice proto;
                    proto.axis = a + 1;
                    proto.cut = 0.5 * (xa + xb);
                    proto.left = cell;
                    proto.right = cell;
                    proto.left.hi[a] = rank_[a][pts[j]];
                    proto.right.lo[a] = rank_[a][pts[j]];
                    if (child_cap == 1) {
                        const Stats right{total.count - left.count, total.sum - left.sum,
                                          total.sumsq - left.sumsq};
                        Choice c = proto;
                        c.sse = leaf_sse(left) + leaf_sse(right);
                        c.k_left = c.k_right = 1;
                        offer(best[2], c);
                    } else {
                        // Copies: solve() may rehash the memo table.
                        const std::vector<Choice> lsol = solve(proto.left, depth_left - 1);
                        const std::vector<Choice>& rsol = solve(proto.right, depth_left - 1);
                        for (int kl = 1; kl < static_cast<int>(lsol.size()); ++kl)
                            for (int kr = 1; kr < static_cast<int>(rsol.size()) && kl + kr <= kcap; ++kr) {
                                Choice c = proto;
                                c.sse = lsol[kl].sse + rsol[kr].sse;
                                c.k_left = kl;
                                c.k_right = kr;
                                offer(best[kl + kr], c);
                            }
                    }
                }
            }
        }
        for (int k = 2; k <= kcap; ++k)
            if (!(best[k].sse < best[k - 1].sse - kTie)) best[k] = best[k - 1];
        return memo.emplace(cell, std::move(best)).first->second;
    }

    ThetaAC build(const CellKey& cell, int depth_left, int k) {
        const std::vector<Choice> sol = solve(cell, depth_left);
        const Choice& c = sol[std::min<int>(k, static_cast<int>(sol.size()) - 1)];
        if (c.axis == 0) return ThetaAC::leaf(c.mark);
        return ThetaAC::split(c.axis, c.cut, build(c.left, depth_left - 1, c.k_left),
                              build(c.right, depth_left - 1, c.k_right));
    }

private:
    const std::vector<double>& coord(int a) const { return a == 0 ? sample_.x1 : sample_.x2; }

    std::vector<int> points_along(const CellKey& cell, int a) const {
        const int b = 1 - a;
        std::vector<int> pts;
        for (int r = cell.lo[a]; r < cell.hi[a]; ++r) {
            const int i = order_[a][r];
            if (rank_[b][i] >= cell.lo[b] && rank_[b][i] < cell.hi[b]) pts.push_back(i);
        }
        return pts;
    }

    Stats stats_of(const std::vector<int>& pts) const {
        Stats s;
        for (int i : pts) {
            s.count += 1.0;
            s.sum += sample_.y[i];
            s.sumsq += sample_.y[i] * sample_.y[i];
        }
        return s;
    }

    double mark_of(const Stats& s) const { return s.count > 0.0 ? config_.clip(s.sum / s.count) : 0.0; }

    double leaf_sse(const Stats& s) const {
        const double m = mark_of(s);
        return std::max(0.0, s.sumsq - 2.0 * m * s.sum + s.count * m * m);
    }

    Choice leaf_choice(const Stats& s) const {
        Choice c;
        c.sse = leaf_sse(s);
        c.mark = mark_of(s);
        return c;
    }

    static void offer(Choice& slot, const Choice& candidate) {
        if (candidate.sse < slot.sse - kTie) slot = candidate;
    }

    const Sample& sample_;
    const ModelConfig& config_;
    int k_top_;
    int n_;
    std::vector<int> order_[2];
    std::vector<int> rank_[2];
    std::vector<std::unordered_map<CellKey, std::vector<Choice>, CellKeyHash>> memo_;
};

} // namespace

// ---------------------------------------------------------------------------

EmRun run_em(const Sample& sample, const ModelConfig& config, ThetaLM init, double tol,
             int max_iter) {
    check_family(sample, config, Family::LM);
    normalize(init, config);
    EmRun run;
    run.theta = std::move(init);
    std::vector<double> mass, moment;
    double current = e_step(sample.y, config, run.theta, mass, moment);
    run.trace.push_back(current);
    if (sample.n() == 0) {
        run.converged = true;
        return run;
    }
    for (int it = 0; it < max_iter; ++it) {
        ThetaLM next = run.theta;
        const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
        for (std::size_t k = 0; k < next.weights.size(); ++k) {
            next.weights[k] = mass[k] / total;
            if (mass[k] > 0.0) next.means[k] = config.clip(moment[k] / mass[k]);
        }
        std::vector<double> next_mass, next_moment;
        const double updated = e_step(sample.y, config, next, next_mass, next_moment);
        run.trace.push_back(updated);
        ++run.iterations;
        const double gain = updated - current;
        run.theta = std::move(next);
        mass = std::move(next_mass);
        moment = std::move(next_moment);
        current = updated;
        if (gain < tol) {
            run.converged = true;
            break;
        }
    }
    return run;
}

FitResult fit_lm_em(const Sample& sample, int k, const ModelConfig& config,
                    const FitOptions& options, const std::vector<ThetaLM>& extra_starts) {
    check_family(sample, config, Family::LM);
    if (k < 1) throw UsageError("K must be at least 1");
    if (k > options.k_hard_cap) throw UsageError("K exceeds the configured hard cap");
    if (options.starts < 1) throw UsageError("EM needs at least one start");
    if (!(options.tol > 0.0)) throw UsageError("EM tolerance must be positive");

    std::vector<ThetaLM> starts;
    for (const auto& s : extra_starts)
        if (static_cast<int>(s.weights.size()) == k) starts.push_back(s);
    const int fresh = k == 1 ? 1 : options.starts;
    for (auto& s : quantile_starts(sample.y, k, fresh, config, options.seed))
        starts.push_back(std::move(s));

    FitResult best;
    best.loglik = kNegInf;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
        EmRun run = run_em(sample, config, start, options.tol, options.max_iter);
        for (std::size_t i = 1; i < run.trace.size(); ++i)
            worst = std::min(worst, run.trace[i] - run.trace[i - 1]);
        ++best.starts_used;
        if (run.trace.back() > best.loglik + kTie) {
            best.theta_hat = run.theta;
            best.loglik = run.trace.back();
            best.iterations = run.iterations;
            best.converged = run.converged;
        }
    }
    best.worst_step = std::isfinite(worst) ? worst : 0.0;
    best.loglik = log_likelihood(config, best.theta_hat, sample);
    return best;
}

FitResult fit_vr(const Sample& sample, int k, const ModelConfig& config, double tol,
                 const ThetaVR* warm_start) {
    check_family(sample, config, Family::VR);
    if (k < 1) throw UsageError("K must be at least 1");
    const VrDesign design(sample, k);
    return solve_vr(design, sample, k, config, tol, warm_start);
}

std::vector<FitResult> fit_ac_all(const Sample& sample, int k_top, const ModelConfig& config) {
    check_family(sample, config, Family::AC);
    if (k_top < 1) throw UsageError("K must be at least 1");
    const long long leaf_cap =
        config.ac_depth_max >= 62 ? std::numeric_limits<long long>::max() : (1LL << config.ac_depth_max);
    if (k_top > leaf_cap) throw UsageError("K exceeds 2^ac_depth_max leaves");
    AcSolver solver(sample, config, k_top);
    std::vector<FitResult> out;
    for (int k = 1; k <= k_top; ++k) {
        FitResult r;
        ThetaAC tree = solver.build(solver.root(), config.ac_depth_max, k);
        r.theta_hat = tree;
        r.loglik = log_likelihood(config, r.theta_hat, sample);
        r.iterations = 1;
        r.converged = true;
        r.starts_used = 1;
        out.push_back(std::move(r));
    }
    return out;
}

FitResult fit_ac(const Sample& sample, int k, const ModelConfig& config) {
    return fit_ac_all(sample, k, config).back();
}

FitResult fit(const Sample& sample, int k, const ModelConfig& config, const FitOptions& options) {
    switch (config.family) {
    case Family::LM: return fit_lm_em(sample, k, config, options);
    case Family::VR: return fit_vr(sample, k, config, options.tol);
    case Family::AC: return fit_ac(sample, k, config);
    }
    throw UsageError("unknown family");
}

ProfileCurve profile(const Sample& sample, const ModelConfig& config, int k_top,
                     const FitOptions& options) {
    if (k_top < 1) throw UsageError("k_top must be at least 1");
    std::vector<FitResult> fits;
    switch (config.family) {
    case Family::AC: {
        // Theta_K stops growing once K reaches the leaf cap of the depth limit.
        const long long leaf_cap = config.ac_depth_max >= 62 ? std::numeric_limits<long long>::max()
                                                             : (1LL << config.ac_depth_max);
        fits = fit_ac_all(sample, static_cast<int>(std::min<long long>(k_top, leaf_cap)), config);
        while (static_cast<int>(fits.size()) < k_top) fits.push_back(fits.back());
        break;
    }
    case Family::VR: {
        check_family(sample, config, Family::VR);
        const VrDesign design(sample, k_top);
        for (int k = 1; k <= k_top; ++k) {
            const ThetaVR* warm = fits.empty() ? nullptr : &std::get<ThetaVR>(fits.back().theta_hat);
            fits.push_back(solve_vr(design, sample, k, config, std::min(options.tol, 1e-12), warm));
        }
        break;
    }
    case Family::LM: {
        for (int k = 1; k <= k_top; ++k) {
            std::vector<ThetaLM> warm;
            if (!fits.empty()) {
                const auto& prev = std::get<ThetaLM>(fits.back().theta_hat);
                // Split the heaviest component of the K-1 solution.
                const auto heavy = static_cast<std::size_t>(
                    std::max_element(prev.weights.begin(), prev.weights.end()) - prev.weights.begin());
                ThetaLM split = prev;
                split.weights[heavy] *= 0.5;
                split.weights.push_back(split.weights[heavy]);
                split.means.push_back(config.clip(prev.means[heavy] + 0.5 * config.sigma));
                split.means[heavy] = config.clip(prev.means[heavy] - 0.5 * config.sigma);
                warm.push_back(std::move(split));
            }
            fits.push_back(fit_lm_em(sample, k, config, options, warm));
        }
        break;
    }
    }

    ProfileCurve curve;
    for (int k = 1; k <= k_top; ++k) {
        FitResult& r = fits[k - 1];
        ProfileEntry e{k, r.loglik, r.theta_hat, r.converged, r.iterations};
        if (k > 1) {
            const ProfileEntry& prev = curve.entries.back();
            if (e.loglik_sup < prev.loglik_sup) {
                e.theta_hat = embed(prev.theta_hat, k);
                e.loglik_sup = prev.loglik_sup;
            }
        }
        curve.entries.push_back(std::move(e));
    }
    return curve;
}

void write_profile_csv(std::ostream& out, const ProfileCurve& curve) {
    out << "K,loglik,converged,iterations\n";
    for (const auto& e : curve.entries)
        out << e.k << ',' << format_double(e.loglik_sup) << ',' << (e.converged ? 1 : 0) << ','
            << e.iterations << '\n';
}

} // namespace pmlorder
