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
#include "pmlorder/criterion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pmlorder/errors.hpp"
#include "pmlorder/io.hpp"

namespace pmlorder {

namespace {

constexpr double kTie = 1e-12;

double base_v(VForm form, double param, double n) {
    switch (form) {
    case VForm::Power: return std::pow(n, 1.0 - param);
    case VForm::LogPower: return std::pow(std::log(n), 1.0 + param);
    case VForm::Bic: return std::log(n);
    case VForm::IterLog: {
        const double ll = loglog(n);
        return std::sqrt(n * ll) * std::pow(ll, 0.05);
    }
    }
    return 0.0;
}

/// "Tends to zero on the grid": nonincreasing over the upper half, and the
/// last value is below the first. Margin is the largest relative step up in
/// the upper half (<= 0 when the tail is monotone).
ScheduleCheck tends_to_zero(std::string name, const std::vector<double>& seq) {
    ScheduleCheck c;
    c.name = std::move(name);
    const std::size_t start = seq.size() / 2;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = std::max<std::size_t>(start, 1); i < seq.size(); ++i)
        worst = std::max(worst, (seq[i] - seq[i - 1]) / std::abs(seq[i - 1]));
    if (!std::isfinite(worst)) worst = 0.0;
    c.margin = worst;
    c.pass = worst <= 1e-12 && seq.back() < seq.front();
    return c;
}

void merge_worst(ScheduleCheck& into, const ScheduleCheck& c) {
    into.pass = into.pass && c.pass;
    into.margin = std::max(into.margin, c.margin);
}

} // namespace

double loglog(double n) { return std::log(std::log(std::max(n, std::exp(std::numbers::e)))); }

double PenaltySchedule::v(double n) const { return scale * base_v(form, param, n); }

double PenaltySchedule::weight(int k) const {
    if (k < 1 || k > k_cap())
        throw UsageError("K=" + std::to_string(k) + " beyond the complexity weights D");
    return d[k - 1];
}

std::string PenaltySchedule::to_string() const {
    std::string s;
    switch (form) {
    case VForm::Power: s = "power:" + format_double(param); break;
    case VForm::LogPower: s = "logpower:" + format_double(param); break;
    case VForm::Bic: s = "bic"; break;
    case VForm::IterLog: s = "iterlog"; break;
    }
    s += d_rule == DRule::Dim ? " D=dim" : " D=linear";
    if (scale != 1.0) s += " scale=" + format_double(scale);
    return s;
}

std::vector<double> complexity_weights(DRule rule, Family family, int k_cap) {
    std::vector<double> d(k_cap);
    for (int k = 1; k <= k_cap; ++k) {
        if (rule == DRule::Linear || family == Family::VR) d[k - 1] = k;
        else d[k - 1] = 2.0 * k - 1.0;
    }
    return d;
}

PenaltySchedule make_schedule(VForm form, double param, std::vector<double> d, double scale,
                              DRule rule) {
    if (form == VForm::Power && !(param > 0.0 && param < 1.0))
        throw DomainError("power schedule needs delta in (0,1)");
    if (form == VForm::LogPower && !(param > 0.0))
        throw DomainError("logpower schedule needs eps > 0");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("schedule scale must be positive");
    if (d.empty()) throw DomainError("complexity weights D are empty");
    for (std::size_t k = 0; k < d.size(); ++k) {
        if (!(d[k] > 0.0)) throw DomainError("complexity weights D must be positive");
        if (k > 0 && !(d[k] > d[k - 1])) throw DomainError("complexity weights D must increase strictly");
    }
    PenaltySchedule s;
    s.form = form;
    s.param = (form == VForm::Power || form == VForm::LogPower) ? param : 0.0;
    s.scale = scale;
    s.d_rule = rule;
    s.d = std::move(d);
    return s;
}

PenaltySchedule parse_schedule(std::string_view text, Family family, int k_cap) {
    std::istringstream in{std::string(text)};
    std::string token;
    if (!(in >> token)) throw ParseError("schedule", "empty schedule");
    VForm form;
    double param = 0.0;
    if (token.rfind("power:", 0) == 0) {
        form = VForm::Power;
        param = parse_double(token.substr(6), "schedule");
    } else if (token.rfind("logpower:", 0) == 0) {
        form = VForm::LogPower;
        param = parse_double(token.substr(9), "schedule");
    } else if (token == "bic") {
        form = VForm::Bic;
    } else if (token == "iterlog") {
        form = VForm::IterLog;
    } else {
        throw ParseError("schedule", "unknown penalty form '" + token + "'");
    }
    DRule rule = DRule::Dim;
    double scale = 1.0;
    bool seen_d = false, seen_scale = false;
    while (in >> token) {
        if (token.rfind("D=", 0) == 0 && !seen_d) {
            seen_d = true;
            const std::string r = token.substr(2);
            if (r == "dim") rule = DRule::Dim;
            else if (r == "linear") rule = DRule::Linear;
            else throw ParseError("schedule", "unknown complexity rule '" + r + "'");
        } else if (token.rfind("scale=", 0) == 0 && !seen_scale) {
            seen_scale = true;
            scale = parse_double(token.substr(6), "schedule");
        } else {
            throw ParseError("schedule", "unexpected token '" + token + "'");
        }
    }
    try {
        return make_schedule(form, param, complexity_weights(rule, family, k_cap), scale, rule);
    } catch (const DomainError& e) {
        throw ParseError("schedule", e.what());
    }
}

double penalty(const PenaltySchedule& schedule, double n, int k) {
    if (!(n >= 1.0)) throw UsageError("penalty needs n >= 1");
    return schedule.v(n) * schedule.weight(k);
}

std::string_view to_string(Regime regime) {
    switch (regime) {
    case Regime::Lil: return "lil";
    case Regime::LogLog: return "loglog";
    case Regime::Moderate: return "moderate";
    case Regime::Donsker: return "donsker";
    }
    return "?";
}

Regime parse_regime(std::string_view text) {
    if (text == "lil") return Regime::Lil;
    if (text == "loglog") return Regime::LogLog;
    if (text == "moderate") return Regime::Moderate;
    if (text == "donsker") return Regime::Donsker;
    throw ParseError("regime", "unknown regime '" + std::string(text) + "'");
}

bool ScheduleReport::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

std::vector<double> log_grid(double lo, double hi, int per_decade) {
    std::vector<double> grid;
    const double step = std::pow(10.0, 1.0 / per_decade);
    for (double n = lo; n <= hi * (1.0 + 1e-12); n *= step) grid.push_back(std::round(n));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

ScheduleReport validate_schedule(const PenaltySchedule& schedule, Regime regime,
                                 const std::vector<double>& n_grid, const std::vector<int>& k_grid,
                                 const ValidateOptions& options) {
    if (n_grid.size() < 2 || k_grid.empty()) throw UsageError("validate_schedule needs nonempty grids");
    for (std::size_t i = 1; i < n_grid.size(); ++i)
        if (!(n_grid[i] > n_grid[i - 1])) throw UsageError("n_grid must increase");

    ScheduleReport report;
    report.regime = regime;

    // For each K, a sequence over n of some ratio, reduced to one check.
    auto over_k = [&](std::string name, auto ratio) {
        ScheduleCheck all{std::move(name), true, -std::numeric_limits<double>::infinity()};
        for (int k : k_grid) {
            std::vector<double> seq;
            for (double n : n_grid) seq.push_back(ratio(n, k));
            merge_worst(all, tends_to_zero("", seq));
        }
        return all;
    };
    auto over_v = [&](std::string name, auto ratio) {
        std::vector<double> seq;
        for (double n : n_grid) seq.push_back(ratio(n));
        return tends_to_zero(std::move(name), seq);
    };
    auto pen_ratio = [&] {
        ScheduleCheck c{"pen(n,K+1)/pen(n,K) - 1 > 0", true, std::numeric_limits<double>::infinity()};
        for (int k : k_grid) {
            if (k + 1 > schedule.k_cap()) continue;
            for (double n : n_grid)
                c.margin = std::min(c.margin, penalty(schedule, n, k + 1) / penalty(schedule, n, k) - 1.0);
        }
        c.pass = c.margin > 0.0;
        return c;
    };
    auto pen_over_n = [&] {
        return over_k("pen/n -> 0", [&](double n, int k) { return penalty(schedule, n, k) / n; });
    };

    switch (regime) {
    case Regime::Lil:
        report.checks.push_back(pen_ratio());
        report.checks.push_back(over_k("(n loglog n)^(1/2)/pen -> 0", [&](double n, int k) {
            return std::sqrt(n * loglog(n)) / penalty(schedule, n, k);
        }));
        report.checks.push_back(pen_over_n());
        break;
    case Regime::LogLog:
        report.checks.push_back(pen_ratio());
        report.checks.push_back(over_k("loglog n/pen -> 0", [&](double n, int k) {
            return loglog(n) / penalty(schedule, n, k);
        }));
        report.checks.push_back(pen_over_n());
        break;
    case Regime::Moderate: {
        report.checks.push_back(over_v("n/v_n^2 -> 0", [&](double n) {
            const double v = schedule.v(n);
            return n / (v * v);
        }));
        report.checks.push_back(over_v("v_n/n -> 0", [&](double n) { return schedule.v(n) / n; }));
        double delta = options.delta;
        if (delta < 0.0) delta = schedule.form == VForm::Power ? schedule.param : 0.5;
        ScheduleCheck bound{"1 - v_nk/(A k^(1-delta) v_n) >= 0", true,
                            std::numeric_limits<double>::infinity()};
        for (double n : n_grid)
            for (int k : k_grid) {
                const double ratio =
                    schedule.v(n * k) / (options.a * std::pow(static_cast<double>(k), 1.0 - delta) * schedule.v(n));
                bound.margin = std::min(bound.margin, 1.0 - ratio);
            }
        bound.pass = bound.margin >= -1e-12;
        report.checks.push_back(bound);
        break;
    }
    case Regime::Donsker:
        report.checks.push_back(
            over_v("log n/v_n -> 0", [&](double n) { return std::log(n) / schedule.v(n); }));
        report.checks.push_back(over_v("v_n/n -> 0", [&](double n) { return schedule.v(n) / n; }));
        break;
    }
    return report;
}

std::vector<double> crit(const ProfileCurve& profile, const PenaltySchedule& schedule, double n) {
    std::vector<double> out;
    out.reserve(profile.k_top());
    for (int k = 1; k <= profile.k_top(); ++k)
        out.push_back(profile.loglik(k) - penalty(schedule, n, k));
    return out;
}

LocalOrder first_local_max(const std::vector<double>& crit_values, int k_scan_max) {
    if (k_scan_max < 1) throw UsageError("k_scan_max must be at least 1");
    if (static_cast<int>(crit_values.size()) < k_scan_max + 1)
        throw UsageError("local scan needs crit values up to k_scan_max + 1");
    for (int k = 1; k <= k_scan_max; ++k)
        if (crit_values[k - 1] >= crit_values[k] - kTie) return {k, false};
    return {k_scan_max, true};
}

int smallest_global_max(const std::vector<double>& crit_values, int k_max) {
    if (k_max < 1 || static_cast<int>(crit_values.size()) < k_max)
        throw UsageError("global scan needs crit values up to k_max");
    int best = 1;
    for (int k = 2; k <= k_max; ++k)
        if (crit_values[k - 1] > crit_values[best - 1] + kTie) best = k;
    return best;
}

LocalOrder estimate_order_local(const ProfileCurve& profile, const PenaltySchedule& schedule,
                                double n, int k_scan_max) {
    return first_local_max(crit(profile, schedule, n), k_scan_max);
}

int estimate_order_global(const ProfileCurve& profile, const PenaltySchedule& schedule, double n,
                          int k_max) {
    return smallest_global_max(crit(profile, schedule, n), k_max);
}

OrderEstimate estimate_order(const ProfileCurve& profile, const PenaltySchedule& schedule, double n,
                             int k_max, int k_scan_max) {
    OrderEstimate e;
    e.crit_values = crit(profile, schedule, n);
    const LocalOrder local = first_local_max(e.crit_values, k_scan_max);
    e.k_local = local.k;
    e.scan_cap_hit = local.cap_hit;
    e.k_global = smallest_global_max(e.crit_values, k_max);
    return e;
}

} // namespace pmlorder
