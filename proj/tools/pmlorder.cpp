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
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pmlorder/criterion.hpp"
#include "pmlorder/errors.hpp"
#include "pmlorder/experiment.hpp"
#include "pmlorder/io.hpp"
#include "pmlorder/mle.hpp"

using namespace pmlorder;

namespace {

struct SpecFlags {
    std::string spec_file;
    std::vector<std::string> sets;
    std::vector<std::pair<std::string, std::string>> direct;
};

/// Registers --spec, --set and one flag per spec key (underscores become dashes).
void add_spec_flags(CLI::App* app, SpecFlags& flags) {
    app->add_option("--spec", flags.spec_file, "experiment spec file (key=value text form)");
    app->add_option("--set", flags.sets, "override KEY=VALUE (repeatable)");
    static const char* keys[] = {"family",     "sigma",  "m_lo",      "m_hi",   "ac_depth_max",
                                 "weights",    "means",  "coeffs",    "tree",   "schedule",
                                 "regime",     "estimator", "k_max",  "k_scan_max", "starts",
                                 "tol",        "max_iter", "k_hard_cap", "mode", "n_grid",
                                 "trials",     "seed",   "output_dir", "threads"};
    for (const char* key : keys) {
        std::string flag = std::string("--") + key;
        for (char& c : flag) if (c == '_') c = '-';
        auto* target = &flags.direct;
        app->add_option_function<std::string>(
               flag, [target, k = std::string(key)](const std::string& v) { target->emplace_back(k, v); },
               "spec key " + std::string(key))
            ->type_name("VALUE");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentSpec build_spec(const SpecFlags& flags, bool check) {
    ExperimentSpec spec = flags.spec_file.empty() ? ExperimentSpec{}
                                                  : parse_spec(read_file(flags.spec_file), false);
    auto apply = [&spec](const std::string& key, const std::string& value) {
        if (key == "family") {
            // a new family invalidates parameter keys from the file
            spec.theta_pairs.clear();
        }
        apply_key(spec, "", key, value);
    };
    for (const auto& [k, v] : flags.direct) apply(k, v);
    for (const auto& s : flags.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ParseError(s, "--set expects KEY=VALUE");
        apply(s.substr(0, eq), s.substr(eq + 1));
    }
    if (check) spec.validate();
    return spec;
}

Sample load_sample(const std::string& path, Family family) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    return read_sample_csv(in, family);
}

int finish(const RunResult& r) {
    for (const auto& f : r.files) std::cout << "wrote " << f << '\n';
    return r.status;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pmlorder: penalized maximum likelihood order estimation experiments"};
    app.require_subcommand(1);

    SpecFlags sim_flags, fit_flags, order_flags, ent_flags, camp_flags, inv_flags;

    auto* sim = app.add_subcommand("simulate", "draw a sample from theta* and write it as CSV");
    add_spec_flags(sim, sim_flags);
    std::size_t sim_n = 0;
    std::string sim_out;
    sim->add_option("--n", sim_n, "sample size (default: first n_grid entry)");
    sim->add_option("--out", sim_out, "output CSV (default: stdout)");

    auto* fitc = app.add_subcommand("fit", "profile the maximized log-likelihood over K = 1..k_top");
    add_spec_flags(fitc, fit_flags);
    std::string fit_data, fit_out;
    int fit_k_top = 4;
    fitc->add_option("--data", fit_data, "sample CSV")->required();
    fitc->add_option("--k-top", fit_k_top, "largest K to fit")->check(CLI::PositiveNumber);
    fitc->add_option("--out", fit_out, "profile CSV (default: stdout)");

    auto* orderc = app.add_subcommand("order", "estimate the order of a sample");
    add_spec_flags(orderc, order_flags);
    std::string order_data, order_crit;
    orderc->add_option("--data", order_data, "sample CSV")->required();
    orderc->add_option("--crit-out", order_crit, "write K,loglik,penalty,crit CSV here");

    auto* ent = app.add_subcommand("entropy", "tabulate H(P*|Pi_K) and H(Pi_K|P*)");
    add_spec_flags(ent, ent_flags);

    auto* camp = app.add_subcommand("campaign", "Monte Carlo campaign (consistency, under_exponent, over_rate)");
    add_spec_flags(camp, camp_flags);

    auto* inv = app.add_subcommand("invariants", "peeling, KL, EM and profile invariant suites");
    add_spec_flags(inv, inv_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            const ExperimentSpec spec = build_spec(sim_flags, true);
            const std::size_t n = sim_n > 0 ? sim_n : spec.n_grid.front();
            const Sample s = simulate(spec.model, spec.theta_star(), n, spec.seed);
            if (sim_out.empty()) {
                write_sample_csv(std::cout, s);
            } else {
                std::ofstream out(sim_out, std::ios::binary);
                if (!out) throw UsageError("cannot write " + sim_out);
                write_sample_csv(out, s);
            }
            return 0;
        }
        if (fitc->parsed()) {
            const ExperimentSpec spec = build_spec(fit_flags, false);
            spec.model.validate();
            FitOptions fo = spec.fit;
            fo.seed = spec.seed;
            const ProfileCurve curve = profile(load_sample(fit_data, spec.model.family), spec.model,
                                               fit_k_top, fo);
            if (fit_out.empty()) {
                write_profile_csv(std::cout, curve);
            } else {
                std::ofstream out(fit_out, std::ios::binary);
                if (!out) throw UsageError("cannot write " + fit_out);
                write_profile_csv(out, curve);
            }
            return 0;
        }
        if (orderc->parsed()) {
            const ExperimentSpec spec = build_spec(order_flags, false);
            spec.model.validate();
            const int k_max = spec.k_max > 0 ? spec.k_max : 4;
            const int k_scan = spec.k_scan_max > 0 ? spec.k_scan_max : 2 * k_max;
            const PenaltySchedule schedule = spec.penalty_schedule();
            const Sample sample = load_sample(order_data, spec.model.family);
            FitOptions fo = spec.fit;
            fo.seed = spec.seed;
            const ProfileCurve curve = profile(sample, spec.model, std::max(k_max, k_scan + 1), fo);
            const double n = static_cast<double>(sample.n());
            const OrderEstimate e = estimate_order(curve, schedule, n, k_max, k_scan);
            std::cout << "n=" << sample.n() << "\nschedule=" << schedule.to_string()
                      << "\nk_local=" << e.k_local << "\nk_global=" << e.k_global
                      << "\nscan_cap_hit=" << (e.scan_cap_hit ? "true" : "false") << '\n';
            if (!order_crit.empty()) {
                std::ofstream out(order_crit, std::ios::binary);
                if (!out) throw UsageError("cannot write " + order_crit);
                out << "K,loglik,penalty,crit\n";
                for (int k = 1; k <= curve.k_top(); ++k)
                    out << k << ',' << format_double(curve.loglik(k)) << ','
                        << format_double(penalty(schedule, n, k)) << ','
                        << format_double(e.crit_values[k - 1]) << '\n';
            }
            return 0;
        }
        if (ent->parsed()) {
            ExperimentSpec spec = build_spec(ent_flags, false);
            spec.mode = Mode::EntropyTable;
            const RunResult r = run(spec, std::cerr);
            std::cout << read_file((std::filesystem::path(spec.output_dir) / "results.csv").string());
            return r.status;
        }
        if (camp->parsed()) {
            const ExperimentSpec spec = build_spec(camp_flags, true);
            if (spec.mode == Mode::EntropyTable || spec.mode == Mode::Invariants)
                throw ParseError("mode", "campaign runs consistency, under_exponent or over_rate");
            return finish(run(spec, std::cerr));
        }
        if (inv->parsed()) {
            ExperimentSpec spec = build_spec(inv_flags, false);
            spec.mode = Mode::Invariants;
            const RunResult r = run(spec, std::cerr);
            return finish(r);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
