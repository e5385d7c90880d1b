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
#include "pmlorder/experiment.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pmlorder/entropy.hpp"
#include "pmlorder/errors.hpp"
#include "pmlorder/io.hpp"
#include "pmlorder/rng.hpp"

namespace pmlorder {

namespace {

using json = nlohmann::ordered_json;

struct KeyInfo {
    std::string_view section;
    std::string_view key;
};

constexpr KeyInfo kKeys[] = {
    {"model", "family"},          {"model", "sigma"},         {"model", "m_lo"},
    {"model", "m_hi"},            {"model", "vr_basis"},      {"model", "ac_depth_max"},
    {"theta", "weights"},         {"theta", "means"},         {"theta", "coeffs"},
    {"theta", "tree"},            {"criterion", "schedule"},  {"criterion", "regime"},
    {"criterion", "estimator"},   {"criterion", "k_max"},     {"criterion", "k_scan_max"},
    {"fit", "starts"},            {"fit", "tol"},             {"fit", "max_iter"},
    {"fit", "k_hard_cap"},        {"experiment", "mode"},     {"experiment", "n_grid"},
    {"experiment", "trials"},     {"experiment", "seed"},     {"experiment", "output_dir"},
    {"experiment", "threads"},
};

int parse_positive_int(std::string_view value, const std::string& key, long long min_value) {
    const long long v = parse_int(value, key);
    if (v < min_value || v > 1'000'000'000LL)
        throw ParseError(key, "expected an integer >= " + std::to_string(min_value));
    return static_cast<int>(v);
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string timestamp_utc() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class ArtifactWriter {
public:
    ArtifactWriter(const ExperimentSpec& spec, RunResult& result) : spec_(spec), result_(result) {
        std::filesystem::create_directories(spec.output_dir);
    }

    void write(const std::string& name, const std::string& csv, const json& extra) {
        const std::filesystem::path dir(spec_.output_dir);
        {
            std::ofstream out(dir / name, std::ios::binary);
            if (!out) throw UsageError("cannot write " + (dir / name).string());
            out << csv;
        }
        std::ofstream manifest(dir / (name + ".manifest.json"), std::ios::binary);
        if (!manifest) throw UsageError("cannot write manifest for " + name);
        manifest << manifest_json(spec_, name, extra.dump()) << '\n';
        result_.files.push_back(name);
    }

private:
    const ExperimentSpec& spec_;
    RunResult& result_;
};

const char* kProbHeader = "n,trials,p_under,p_over,p_correct,ci_lo,ci_hi,method,ess\n";

void prob_row(std::ostringstream& csv, const ErrorProbEstimate& e, const Interval& ci) {
    csv << e.n << ',' << e.trials << ',' << format_double(e.p_under) << ','
        << format_double(e.p_over) << ',' << format_double(e.p_correct) << ','
        << format_double(ci.lo) << ',' << format_double(ci.hi) << ',' << to_string(e.method) << ','
        << format_double(e.ess) << '\n';
}

json fit_json(const ExponentFit& f) {
    return json{{"x_axis", std::string(to_string(f.x_axis))},
                {"slope", f.slope},
                {"intercept", f.intercept},
                {"r2", f.r2},
                {"slope_se", f.slope_se},
                {"excluded", f.excluded}};
}

std::string fit_csv(const ExponentFit& f) {
    std::ostringstream csv;
    csv << "x,neg_log_p\n";
    for (const auto& [x, y] : f.points) csv << format_double(x) << ',' << format_double(y) << '\n';
    return csv.str();
}

void check_schedule(const ExperimentSpec& spec, const PenaltySchedule& schedule, int k_max,
                    RunResult& result, std::ostream& log) {
    std::vector<int> k_grid;
    for (int k = 1; k <= k_max; ++k) k_grid.push_back(k);
    const double hi = std::max(1e6, static_cast<double>(spec.n_grid.back()));
    const ScheduleReport report =
        validate_schedule(schedule, spec.regime, log_grid(10.0, hi, 4), k_grid);
    for (const auto& c : report.checks)
        if (!c.pass) {
            const std::string w = "warning: schedule " + schedule.to_string() + " fails " +
                                  std::string(to_string(spec.regime)) + " check '" + c.name +
                                  "' (margin " + format_double(c.margin) + ")";
            log << w << '\n';
            result.warnings.push_back(w);
        }
}

struct SuiteTally {
    std::string name;
    std::size_t cases = 0;
    std::size_t violations = 0;
    double worst = std::numeric_limits<double>::infinity(); // smallest margin seen

    void add(double margin, double tol) {
        ++cases;
        worst = std::min(worst, margin);
        if (margin < -tol) ++violations;
    }
};

void run_invariants(const ExperimentSpec& spec, RunResult& result, ArtifactWriter& writer,
                    std::ostream& log) {
    const Theta theta_star = spec.theta_star();
    const int k_star = true_order(theta_star);
    const std::size_t n = spec.n_grid.front();
    const std::size_t cases = spec.trials;

    SuiteTally peel{"peeling"}, kl_nonneg{"kl_nonnegativity"}, em{"em_monotonicity"},
        prof{"profile_monotonicity"};

    for (std::size_t d = 0; d < cases; ++d) {
        const std::uint64_t s = derive_seed(spec.seed, d);
        const Sample sample = simulate(spec.model, theta_star, n, s);
        PeelingOptions po;
        po.seed = s;
        po.fit_options = spec.fit;
        const PeelingReport r = peeling_assert(sample, spec.model, k_star, k_star + 1, theta_star, po);
        peel.add(std::min(r.left_a1 - r.right, r.left_a2 - r.right), po.tol);

        FitOptions fo = spec.fit;
        fo.seed = s;
        const ProfileCurve curve = profile(sample, spec.model, k_star + 2, fo);
        double margin = std::numeric_limits<double>::infinity();
        for (int k = 2; k <= curve.k_top(); ++k) margin = std::min(margin, curve.loglik(k) - curve.loglik(k - 1));
        prof.add(margin, 1e-9);

        Engine engine = make_engine(derive_seed(s, 1));
        const Theta a = random_theta(spec.model, k_star + 1, engine);
        const Theta b = random_theta(spec.model, k_star + 1, engine);
        kl_nonneg.add(kl(a, b, spec.model).value, 1e-12);
        kl_nonneg.add(-std::abs(kl(a, a, spec.model).value), 1e-9);

        ModelConfig lm = spec.model;
        lm.family = Family::LM;
        const int k_lm = 1 + static_cast<int>(d % 3);
        const Theta theta_lm = random_theta(lm, k_lm, engine);
        const Sample lm_sample = simulate(lm, theta_lm, n, derive_seed(s, 2));
        const auto init = std::get<ThetaLM>(random_theta(lm, k_lm, engine));
        const EmRun run = run_em(lm_sample, lm, init, spec.fit.tol, spec.fit.max_iter);
        double step = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < run.trace.size(); ++i) step = std::min(step, run.trace[i] - run.trace[i - 1]);
        if (run.trace.size() > 1) em.add(step, 1e-9);
    }

    std::ostringstream csv;
    csv << "suite,cases,violations,worst\n";
    json extra = json::array();
    for (const SuiteTally* t : {&peel, &kl_nonneg, &em, &prof}) {
        const double worst = t->cases ? t->worst : 0.0;
        csv << t->name << ',' << t->cases << ',' << t->violations << ',' << format_double(worst) << '\n';
        extra.push_back({{"suite", t->name}, {"cases", t->cases}, {"violations", t->violations}});
        log << t->name << ": " << t->cases << " cases, " << t->violations << " violations\n";
        if (t->violations > 0) {
            result.failures.push_back(t->name + ": " + std::to_string(t->violations) + " of " +
                                      std::to_string(t->cases) + " cases violated (worst margin " +
                                      format_double(worst) + ")");
        }
    }
    writer.write("results.csv", csv.str(), json{{"suites", extra}});
}

} // namespace

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::Consistency: return "consistency";
    case Mode::UnderExponent: return "under_exponent";
    case Mode::OverRate: return "over_rate";
    case Mode::EntropyTable: return "entropy_table";
    case Mode::Invariants: return "invariants";
    }
    return "?";
}

Mode parse_mode(std::string_view text) {
    for (Mode m : {Mode::Consistency, Mode::UnderExponent, Mode::OverRate, Mode::EntropyTable,
                   Mode::Invariants})
        if (to_string(m) == text) return m;
    throw ParseError("mode", "unknown mode '" + std::string(text) + "'");
}

std::string_view section_of(std::string_view key) {
    for (const auto& k : kKeys)
        if (k.key == key) return k.section;
    return {};
}

void apply_key(ExperimentSpec& spec, std::string_view section, std::string_view key_view,
               std::string_view value_view) {
    const std::string key(key_view);
    const std::string value(value_view);
    const std::string_view owner = section_of(key);
    if (owner.empty()) {
        const std::string where = section.empty() ? key : std::string(section) + "." + key;
        throw ParseError(where, "unknown key");
    }
    if (!section.empty() && section != owner)
        throw ParseError(key, "belongs in [" + std::string(owner) + "], found in [" +
                                  std::string(section) + "]");

    if (owner == "model") {
        const ModelConfig parsed = config_from_pairs({{key, value}});
        if (key == "family") spec.model.family = parsed.family;
        else if (key == "sigma") spec.model.sigma = parsed.sigma;
        else if (key == "m_lo") spec.model.m_lo = parsed.m_lo;
        else if (key == "m_hi") spec.model.m_hi = parsed.m_hi;
        else if (key == "ac_depth_max") spec.model.ac_depth_max = parsed.ac_depth_max;
    } else if (owner == "theta") {
        spec.theta_pairs[key] = value;
    } else if (key == "schedule") {
        parse_schedule(value, spec.model.family); // syntax check only
        spec.schedule = value;
    } else if (key == "regime") {
        spec.regime = parse_regime(value);
    } else if (key == "estimator") {
        spec.estimator = parse_estimator(value);
    } else if (key == "k_max") {
        spec.k_max = parse_positive_int(value, key, 0);
    } else if (key == "k_scan_max") {
        spec.k_scan_max = parse_positive_int(value, key, 0);
    } else if (key == "starts") {
        spec.fit.starts = parse_positive_int(value, key, 1);
    } else if (key == "tol") {
        spec.fit.tol = parse_double(value, key);
        if (!(spec.fit.tol > 0.0)) throw ParseError(key, "must be positive");
    } else if (key == "max_iter") {
        spec.fit.max_iter = parse_positive_int(value, key, 1);
    } else if (key == "k_hard_cap") {
        spec.fit.k_hard_cap = parse_positive_int(value, key, 1);
    } else if (key == "mode") {
        spec.mode = parse_mode(value);
    } else if (key == "n_grid") {
        std::vector<std::size_t> grid;
        std::string_view rest = value;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const std::string_view item = rest.substr(0, comma);
            grid.push_back(static_cast<std::size_t>(parse_positive_int(item, key, 1)));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (grid.empty()) throw ParseError(key, "empty grid");
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (grid[i] <= grid[i - 1]) throw ParseError(key, "must be strictly increasing");
        spec.n_grid = std::move(grid);
    } else if (key == "trials") {
        const long long t = parse_int(value, key);
        if (t < 0) throw ParseError(key, "must be nonnegative");
        spec.trials = static_cast<std::size_t>(t);
    } else if (key == "seed") {
        const long long s = parse_int(value, key);
        if (s < 0) throw ParseError(key, "must be nonnegative");
        spec.seed = static_cast<std::uint64_t>(s);
    } else if (key == "output_dir") {
        if (value.empty()) throw ParseError(key, "must not be empty");
        spec.output_dir = value;
    } else if (key == "threads") {
        spec.threads = parse_positive_int(value, key, 0);
    }
}

ExperimentSpec parse_spec(std::string_view text, bool check) {
    ExperimentSpec spec;
    std::set<std::string> seen;
    const auto pairs = parse_key_values(text);
    // family first, so that the schedule and theta are read against it
    for (const auto& kv : pairs)
        if (kv.key == "family") apply_key(spec, kv.section, kv.key, kv.value);
    for (const auto& kv : pairs) {
        if (!seen.insert(kv.key).second)
            throw ParseError(kv.key, "duplicate key (line " + std::to_string(kv.line) + ")");
        if (kv.key != "family") apply_key(spec, kv.section, kv.key, kv.value);
    }
    if (check) spec.validate();
    return spec;
}

Theta ExperimentSpec::theta_star() const {
    if (theta_pairs.empty()) throw ParseError("theta", "missing [theta] section");
    Theta t = theta_from_pairs(model.family, theta_pairs);
    pmlorder::validate(model, t);
    return t;
}

PenaltySchedule ExperimentSpec::penalty_schedule() const {
    const int reach = std::max({k_max, k_scan_max + 1, 64});
    return parse_schedule(schedule, model.family, reach);
}

OrderOptions ExperimentSpec::order_options() const {
    OrderOptions o;
    o.k_max = k_max;
    o.k_scan_max = k_scan_max;
    o.threads = threads;
    return o;
}

void ExperimentSpec::validate() const {
    model.validate();
    const Theta t = theta_star();
    penalty_schedule();
    if (mode != Mode::EntropyTable && trials < 1) throw ParseError("trials", "must be at least 1");
    if (k_max > 0 && k_max < true_order(t) && mode != Mode::EntropyTable)
        throw ParseError("k_max", "must be at least the true order");
    if (mode == Mode::UnderExponent && true_order(t) < 2)
        throw ParseError("mode", "under_exponent needs a true order of at least 2");
}

std::string ExperimentSpec::to_text() const {
    std::ostringstream out;
    out << "[model]\n" << config_to_text(model);
    out << "\n[theta]\n";
    for (const auto& [k, v] : theta_pairs) out << k << '=' << v << '\n';
    out << "\n[criterion]\n"
        << "schedule=" << schedule << '\n'
        << "regime=" << to_string(regime) << '\n'
        << "estimator=" << to_string(estimator) << '\n'
        << "k_max=" << k_max << '\n'
        << "k_scan_max=" << k_scan_max << '\n';
    out << "\n[fit]\n"
        << "starts=" << fit.starts << '\n'
        << "tol=" << format_double(fit.tol) << '\n'
        << "max_iter=" << fit.max_iter << '\n'
        << "k_hard_cap=" << fit.k_hard_cap << '\n';
    out << "\n[experiment]\n"
        << "mode=" << to_string(mode) << '\n'
        << "n_grid=" << join_sizes(n_grid) << '\n'
        << "trials=" << trials << '\n'
        << "seed=" << seed << '\n'
        << "output_dir=" << output_dir << '\n'
        << "threads=" << threads << '\n';
    return out.str();
}

std::string content_hash(std::string_view content) {
    const std::string blob = "blob " + std::to_string(content.size()) + std::string(1, '\0') +
                             std::string(content);
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char c : digest) {
        out += hex[c >> 4];
        out += hex[c & 15];
    }
    return out;
}

std::string manifest_json(const ExperimentSpec& spec, const std::string& artifact,
                          const std::string& extra_json) {
    const std::string text = spec.to_text();
    json m;
    m["artifact"] = artifact;
    m["tool"] = "pmlorder";
    m["mode"] = std::string(to_string(spec.mode));
    m["spec_hash"] = content_hash(text);
    m["spec"] = text;
    m["config"] = config_to_text(spec.model);
    m["theta"] = spec.theta_pairs;
    m["schedule"] = spec.penalty_schedule().to_string();
    m["seeds"] = {{"seed", spec.seed},
                  {"trial_seed", "splitmix64 derive_seed(seed, trial_index)"},
                  {"engine", "mt19937_64"}};
    m["summary"] = json::parse(extra_json);
    m["created_utc"] = timestamp_utc();
    return m.dump(2);
}

RunResult run(const ExperimentSpec& spec, std::ostream& log) {
    spec.validate();
    RunResult result;
    ArtifactWriter writer(spec, result);
    const Theta theta_star = spec.theta_star();
    const int k_star = true_order(theta_star);
    const PenaltySchedule schedule = spec.penalty_schedule();
    const OrderOptions order = spec.order_options();
    const int k_max = spec.k_max > 0 ? spec.k_max : k_star + 2;

    switch (spec.mode) {
    case Mode::Consistency:
    case Mode::OverRate: {
        check_schedule(spec, schedule, k_max, result, log);
        std::ostringstream csv;
        csv << kProbHeader;
        std::vector<std::pair<double, double>> points;
        for (std::size_t n : spec.n_grid) {
            const ErrorProbEstimate e = mc_error_probs(spec.model, theta_star, schedule, spec.estimator,
                                                       n, spec.trials, spec.seed, spec.fit, order);
            const bool over = spec.mode == Mode::OverRate;
            prob_row(csv, e, over ? e.ci_over : e.ci_correct);
            points.emplace_back(static_cast<double>(n), over ? e.p_over : e.p_correct);
            log << "n=" << n << " p_under=" << format_double(e.p_under)
                << " p_over=" << format_double(e.p_over) << " p_correct=" << format_double(e.p_correct)
                << '\n';
        }
        writer.write("results.csv", csv.str(), json::object());
        if (spec.mode == Mode::OverRate) {
            try {
                const ExponentFit moderate = fit_moderate_rate(points, schedule);
                const ExponentFit linear = fit_exponent(points);
                log << "fit on vn^2/n: slope=" << format_double(moderate.slope)
                    << " r2=" << format_double(moderate.r2)
                    << "; fit on n: r2=" << format_double(linear.r2) << '\n';
                writer.write("fit.csv", fit_csv(moderate),
                             json{{"moderate", fit_json(moderate)}, {"linear", fit_json(linear)}});
            } catch (const FitError& err) {
                result.warnings.push_back(std::string("warning: no fit: ") + err.what());
                log << result.warnings.back() << '\n';
            }
        }
        break;
    }
    case Mode::UnderExponent: {
        check_schedule(spec, schedule, k_max, result, log);
        ProjectionOptions po;
        po.seed = spec.seed;
        const Theta theta0 = default_proposal(spec.model, theta_star, po);
        const double bound = stein_bound(spec.model, theta_star, k_star - 1, po).entropy.value;
        std::ostringstream csv;
        csv << kProbHeader;
        std::vector<std::pair<double, double>> points;
        for (std::size_t n : spec.n_grid) {
            const ErrorProbEstimate e =
                is_underestimation_prob(spec.model, theta_star, theta0, schedule, spec.estimator, n,
                                        spec.trials, spec.seed, spec.fit, order);
            prob_row(csv, e, e.ci_under);
            points.emplace_back(static_cast<double>(n), e.p_under);
            log << "n=" << n << " p_under=" << format_double(e.p_under)
                << " ess=" << format_double(e.ess) << (e.reliable ? "" : " (unreliable: ess < 10)")
                << '\n';
            if (!e.reliable)
                result.warnings.push_back("warning: n=" + std::to_string(n) + " has ess < 10");
        }
        writer.write("results.csv", csv.str(), json{{"stein_bound", bound}});
        try {
            const ExponentFit f = fit_exponent(points);
            log << "slope=" << format_double(f.slope) << " (se " << format_double(f.slope_se)
                << ") r2=" << format_double(f.r2) << " stein_bound=" << format_double(bound) << '\n';
            writer.write("fit.csv", fit_csv(f), json{{"exponent", fit_json(f)}, {"stein_bound", bound}});
        } catch (const FitError& err) {
            result.warnings.push_back(std::string("warning: no fit: ") + err.what());
            log << result.warnings.back() << '\n';
        }
        break;
    }
    case Mode::EntropyTable: {
        const int k_top = spec.k_max > 0 ? spec.k_max : k_star;
        ProjectionOptions po;
        po.seed = spec.seed;
        std::ostringstream csv;
        csv << "K,quantity,value,method,tol\n";
        for (int k = 1; k <= k_top; ++k) {
            const Projection fwd = project_entropy(spec.model, theta_star, k, po);
            const Projection rev = stein_bound(spec.model, theta_star, k, po);
            for (const auto& [name, p] : {std::pair{"project_entropy", &fwd}, std::pair{"stein_bound", &rev}})
                csv << k << ',' << name << ',' << format_double(p->entropy.value) << ','
                    << to_string(p->entropy.method) << ',' << format_double(p->entropy.tol) << '\n';
        }
        writer.write("results.csv", csv.str(), json::object());
        break;
    }
    case Mode::Invariants:
        run_invariants(spec, result, writer, log);
        break;
    }
    for (const auto& f : result.failures) log << "FAIL " << f << '\n';
    result.status = result.failures.empty() ? 0 : 1;
    return result;
}

} // namespace pmlorder
