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

#include <string>
#include <string_view>
#include <vector>

#include "pmlorder/mle.hpp"
#include "pmlorder/model.hpp"

namespace pmlorder {

/// Growth forms for v_n in pen(n, K) = v_n D(K).
enum class VForm {
    Power,    // n^(1 - delta), delta in (0, 1)
    LogPower, // (log n)^(1 + eps), eps > 0
    Bic,      // log n
    IterLog,  // (n loglog n)^(1/2) (loglog n)^0.05
};

enum class DRule { Dim, Linear };

/// log(log(max(n, e^e))), finite and >= 1 for every n.
double loglog(double n);

struct PenaltySchedule {
    VForm form = VForm::Power;
    double param = 0.25; // delta (power) or eps (logpower)
    double scale = 1.0;  // multiplies v_n
    DRule d_rule = DRule::Dim;
    std::vector<double> d; // D(1), D(2), ...

    /// scale * base form at n.
    double v(double n) const;
    double weight(int k) const;
    int k_cap() const { return static_cast<int>(d.size()); }
    /// Grammar accepted by parse_schedule.
    std::string to_string() const;
};

/// D(K) = dim(Theta_K) (LM: 2K-1, VR: K, AC: 2K-1) or D(K) = K.
std::vector<double> complexity_weights(DRule rule, Family family, int k_cap);

/// Validates D strictly increasing and positive, and the form parameter.
PenaltySchedule make_schedule(VForm form, double param, std::vector<double> d, double scale = 1.0,
                              DRule rule = DRule::Dim);

/// "power:0.25", "logpower:0.1", "bic" or "iterlog", optionally followed by
/// "D=dim" (default) or "D=linear" and "scale=<positive real>".
PenaltySchedule parse_schedule(std::string_view text, Family family, int k_cap = 64);

double penalty(const PenaltySchedule& schedule, double n, int k);

/// Growth regimes: lil: pen >> (n loglog n)^(1/2); loglog: pen >> loglog n;
/// moderate: n^(1/2) << v_n << n; donsker: log n << v_n << n.
enum class Regime { Lil, LogLog, Moderate, Donsker };

std::string_view to_string(Regime regime);
Regime parse_regime(std::string_view text);

struct ScheduleCheck {
    std::string name;
    bool pass = false;
    /// Worst value seen for the check; pass iff margin is on the safe side of 0
    /// (see the check name for the quantity).
    double margin = 0.0;
};

struct ScheduleReport {
    Regime regime = Regime::Lil;
    std::vector<ScheduleCheck> checks;

    bool pass() const;
};

struct ValidateOptions {
    double a = 1.0;      // constant A in v_{nk} <= A k^(1-delta) v_n
    double delta = -1.0; // negative: use the power form's delta, else 0.5
};

/// Finite-grid diagnostic of the growth conditions a regime puts on the
/// penalty. A ratio "tends to 0" on the grid when it is nonincreasing over the
/// upper half of n_grid and ends below where it started.
ScheduleReport validate_schedule(const PenaltySchedule& schedule, Regime regime,
                                 const std::vector<double>& n_grid, const std::vector<int>& k_grid,
                                 const ValidateOptions& options = {});

/// Geometric grid with `per_decade` points per power of ten.
std::vector<double> log_grid(double lo, double hi, int per_decade);

/// crit(n, K) = loglik_sup(K) - pen(n, K) for K = 1..profile.k_top().
std::vector<double> crit(const ProfileCurve& profile, const PenaltySchedule& schedule, double n);

struct LocalOrder {
    int k = 1;
    bool cap_hit = false;
};

/// Smallest K <= k_scan_max with crit[K] >= crit[K+1] (ties within 1e-12
/// count as >=); k_scan_max with cap_hit when there is none.
LocalOrder first_local_max(const std::vector<double>& crit_values, int k_scan_max);

/// Smallest K <= k_max attaining the maximum (ties within 1e-12).
int smallest_global_max(const std::vector<double>& crit_values, int k_max);

LocalOrder estimate_order_local(const ProfileCurve& profile, const PenaltySchedule& schedule,
                                double n, int k_scan_max);
int estimate_order_global(const ProfileCurve& profile, const PenaltySchedule& schedule, double n,
                          int k_max);

struct OrderEstimate {
    int k_local = 1;
    int k_global = 1;
    std::vector<double> crit_values;
    bool scan_cap_hit = false;
};

OrderEstimate estimate_order(const ProfileCurve& profile, const PenaltySchedule& schedule, double n,
                             int k_max, int k_scan_max);

} // namespace pmlorder
