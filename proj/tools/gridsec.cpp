// gridsec: state estimation, bad-data detection and stealthy-attack experiments
// on small bus-branch grid models.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridsec/attack.hpp"
#include "gridsec/bdd.hpp"
#include "gridsec/error.hpp"
#include "gridsec/estimator.hpp"
#include "gridsec/harness.hpp"

namespace {

using namespace gridsec;
using Json = nlohmann::ordered_json;

constexpr int kExitInfeasible = 2;
constexpr int kExitInput = 3;

struct CommonOptions {
    std::string case_path;
    std::string measurement_path;
    std::string protected_path;
    std::string format = "json";
    std::string out;
    std::uint64_t seed = 1;
    double noise_scale = 0.01;
    double tau = kDefaultTau;
    unsigned threads = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--case", o.case_path, "Case file")->required();
    cmd->add_option("--measurements", o.measurement_path,
                    "Measurement file (default: P/Q flows and injections plus voltages everywhere)");
    cmd->add_option("--protected", o.protected_path, "Protected measurement indices, one per line");
    cmd->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--out", o.out, "Output file (default: stdout)");
    cmd->add_option("--seed", o.seed, "Noise seed");
    cmd->add_option("--noise-scale", o.noise_scale, "Noise standard deviation as a fraction of sigma");
    cmd->add_option("--tau", o.tau, "LNR threshold");
    cmd->add_option("--threads", o.threads, "Worker threads");
}

Scenario load(const CommonOptions& o) {
    if (!o.measurement_path.empty()) return load_scenario(o.case_path, o.measurement_path, o.protected_path);
    Network net = read_case_file(o.case_path);
    MeasurementSet set = default_measurement_set(net);
    std::vector<std::size_t> prot;
    if (!o.protected_path.empty()) prot = parse_protected_set(read_text_file(o.protected_path));
    return {std::move(net), std::move(set), std::move(prot)};
}

void write_output(const CommonOptions& o, const std::string& text) {
    if (o.out.empty()) {
        std::cout << text;
    } else {
        write_text_file(o.out, text);
    }
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double num(double v) { return std::strtod(fmt(v).c_str(), nullptr); }

std::size_t checked_target(const Scenario& sc, std::size_t one_based) {
    if (one_based == 0 || one_based > sc.set.size()) {
        throw PreconditionError("--target must be in 1.." + std::to_string(sc.set.size()));
    }
    return one_based - 1;
}

// estimate ------------------------------------------------------------------

int run_estimate(const CommonOptions& o, const std::string& solver) {
    const Scenario sc = load(o);
    const MeasurementSet z =
        simulate_measurements(sc.network, sc.set, StateVector::from_case(sc.network), o.seed, o.noise_scale);
    EstimatorConfig cfg;
    cfg.mode = solver == "fast-decoupled" ? EstimatorMode::FastDecoupled : EstimatorMode::FullNewton;
    const EstimationResult est = estimate(sc.network, z, cfg);
    const ResidualAnalysis bdd = analyze_residuals(sc.network, z, est, o.tau, cfg.pseudo_weight);
    const auto& buses = sc.network.buses();
    constexpr double kDeg = 180.0 / 3.14159265358979323846;

    if (o.format == "csv") {
        std::string out = "bus,vm,va_deg\n";
        for (std::size_t i = 0; i < buses.size(); ++i) {
            out += std::to_string(buses[i].id) + "," + fmt(est.x_hat.magnitude(static_cast<Eigen::Index>(i))) + "," +
                   fmt(est.x_hat.angle(static_cast<Eigen::Index>(i)) * kDeg) + "\n";
        }
        write_output(o, out);
        return 0;
    }
    Json j;
    j["converged"] = est.converged;
    j["iterations"] = est.iterations;
    j["objective"] = num(est.objective);
    Json state = Json::array();
    for (std::size_t i = 0; i < buses.size(); ++i) {
        state.push_back({{"bus", buses[i].id},
                         {"vm", num(est.x_hat.magnitude(static_cast<Eigen::Index>(i)))},
                         {"va_deg", num(est.x_hat.angle(static_cast<Eigen::Index>(i)) * kDeg)}});
    }
    j["state"] = std::move(state);
    Json b;
    b["alarm"] = bdd.alarm;
    b["tau"] = num(bdd.tau);
    b["max_index"] = bdd.max_index ? Json(*bdd.max_index + 1) : Json(nullptr);
    b["max_value"] = num(bdd.max_value);
    Json rn = Json::array();
    for (Eigen::Index k = 0; k < bdd.rn.size(); ++k) rn.push_back(num(bdd.rn(k)));
    b["rN"] = std::move(rn);
    Json critical = Json::array();
    for (std::size_t k : bdd.critical) critical.push_back(k + 1);
    b["critical"] = std::move(critical);
    j["bdd"] = std::move(b);
    write_output(o, j.dump(2) + "\n");
    return 0;
}

// sweep ---------------------------------------------------------------------

struct SweepOptions {
    std::size_t target = 0;
    double start = 0.0;
    double step = 10.0;
    double end = 100.0;
    std::string mode = "stealthy";
    std::string solver = "newton";
};

int run_sweep_command(const CommonOptions& o, const SweepOptions& s) {
    const Scenario sc = load(o);
    ExperimentPlan plan;
    plan.target = checked_target(sc, s.target);
    plan.biases = bias_schedule_mw(s.start, s.step, s.end, sc.network.base_mva());
    plan.mode = parse_attack_mode(s.mode);
    plan.estimator.mode = s.solver == "fast-decoupled" ? EstimatorMode::FastDecoupled : EstimatorMode::FullNewton;
    plan.tau = o.tau;
    plan.seed = o.seed;
    plan.noise_scale = o.noise_scale;
    plan.threads = o.threads;
    const SweepReport report = run_sweep(sc, plan);
    const ReportFormat format = parse_report_format(o.format);
    if (o.out.empty()) {
        std::cout << format_report(report, format);
    } else {
        emit_report(report, format, o.out);
    }
    return 0;
}

// metrics -------------------------------------------------------------------

int run_metrics(const CommonOptions& o, bool relaxation, bool no_alpha_bar, const std::string& rtu_path) {
    const Scenario sc = load(o);
    MetricScanOptions opts;
    opts.method = relaxation ? MetricScanMethod::Relaxation : MetricScanMethod::Exact;
    opts.threads = o.threads;
    opts.with_alpha_bar = !no_alpha_bar;
    if (!rtu_path.empty()) opts.rtu_groups = parse_rtu_groups(read_text_file(rtu_path));
    const MetricScan scan = run_metric_scan(sc.network, sc.set, sc.protected_set, opts);
    if (o.format == "json") {
        write_output(o, format_metric_scan(scan));
        return 0;
    }
    auto opt = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string("inf"); };
    std::string out = "k,label,alpha,alpha_bar,rtus\n";
    for (std::size_t i = 0; i < scan.report.entries.size(); ++i) {
        const MetricEntry& e = scan.report.entries[i];
        out += std::to_string(e.k + 1) + "," + scan.labels[i] + "," + opt(e.alpha) + "," +
               (e.alpha_bar || !opts.with_alpha_bar ? opt(e.alpha_bar) : "inf") + "," +
               (e.rtus ? std::to_string(*e.rtus) : "-") + "\n";
    }
    write_output(o, out);
    return 0;
}

// verify --------------------------------------------------------------------

Json verify_target(const Scenario& sc, const DcModel& dc, const Eigen::MatrixXd& s_dc,
                   const std::vector<std::size_t>& prot, std::size_t k, double factor, double bias) {
    Json j;
    j["k"] = k + 1;
    j["label"] = sc.set[k].kind.label();
    const auto witness = exact_min_attack(dc, k, prot);
    if (!witness) {
        j["alpha"] = nullptr;
        return j;
    }
    j["alpha"] = witness->cardinality();
    Json support = Json::array();
    for (std::size_t m : witness->support) support.push_back(m + 1);
    j["support"] = std::move(support);
    j["rank_lemma"] = verify_rank_lemma(dc, *witness);

    Eigen::VectorXd a_dc(dc.row_count());
    for (Eigen::Index r = 0; r < dc.row_count(); ++r) {
        a_dc(r) = witness->a(static_cast<Eigen::Index>(dc.rows[static_cast<std::size_t>(r)]));
    }
    j["stealth_residual"] = num((s_dc * a_dc).lpNorm<Eigen::Infinity>());

    const AttackVector scaled = scale_attack(*witness, k, bias);
    Json saturation = Json::array();
    for (const SaturationViolation& v : check_saturation(sc.network, sc.set, scaled.a, scaled.support)) {
        saturation.push_back({{"k", v.k + 1}, {"value", num(v.value)}, {"limit", num(v.limit)},
                              {"headroom", num(v.headroom)}});
    }
    j["saturation"] = std::move(saturation);

    Json invariance = Json::array();
    const auto& branches = sc.network.branches();
    for (std::size_t b = 0; b < branches.size(); ++b) {
        if (!branches[b].in_service) continue;
        Json entry{{"branch", b + 1}, {"from", branches[b].from_bus}, {"to", branches[b].to_bus}};
        try {
            entry["stealthy"] = check_model_invariance(dc, perturb_line(dc, sc.network, b, factor), *witness);
        } catch (const PreconditionError&) {
            entry["stealthy"] = "precondition";
        }
        invariance.push_back(std::move(entry));
    }
    j["invariance_factor"] = num(factor);
    j["invariance"] = std::move(invariance);
    return j;
}

int run_verify(const CommonOptions& o, std::size_t target, double factor, double bias_mw) {
    const Scenario sc = load(o);
    const DcModel dc = build_dc_jacobian(sc.network, sc.set);
    const auto prot = protected_rows(sc.set, sc.protected_set);
    const Eigen::VectorXd w = measurement_weights(sc.set, 1.0);
    Eigen::VectorXd w_dc(dc.row_count());
    for (Eigen::Index r = 0; r < dc.row_count(); ++r) w_dc(r) = w(static_cast<Eigen::Index>(dc.rows[static_cast<std::size_t>(r)]));
    const Eigen::MatrixXd s_dc = residual_sensitivity(dc.h, w_dc);
    const double bias = bias_mw / sc.network.base_mva();

    Json results = Json::array();
    int code = 0;
    if (target != 0) {
        const std::size_t k = checked_target(sc, target);
        Json j = verify_target(sc, dc, s_dc, prot, k, factor, bias);
        if (j["alpha"].is_null()) code = kExitInfeasible;
        results.push_back(std::move(j));
    } else {
        for (std::size_t k : dc.rows) {
            if (std::find(prot.begin(), prot.end(), k) != prot.end()) continue;
            results.push_back(verify_target(sc, dc, s_dc, prot, k, factor, bias));
        }
    }
    write_output(o, Json{{"bias_mw", num(bias_mw)}, {"targets", std::move(results)}}.dump(2) + "\n");
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"State estimation and stealthy false-data attack experiments on grid case files"};
    app.require_subcommand(1);

    CommonOptions est_opts, sweep_opts, metric_opts, verify_opts;

    auto* est = app.add_subcommand("estimate", "Simulate measurements, run WLS and the LNR test");
    add_common(est, est_opts);
    std::string est_solver = "newton";
    est->add_option("--solver", est_solver)->check(CLI::IsMember({"newton", "fast-decoupled"}));

    auto* sweep = app.add_subcommand("sweep", "Bias sweep of a naive or stealthy attack");
    add_common(sweep, sweep_opts);
    SweepOptions sw;
    sweep->add_option("--target", sw.target, "Target measurement (1-based)")->required();
    sweep->add_option("--bias-start", sw.start, "First bias, MW");
    sweep->add_option("--bias-step", sw.step, "Bias step, MW");
    sweep->add_option("--bias-end", sw.end, "Last bias, MW");
    sweep->add_option("--mode", sw.mode)->check(CLI::IsMember({"stealthy", "naive"}));
    sweep->add_option("--solver", sw.solver)->check(CLI::IsMember({"newton", "fast-decoupled"}));

    auto* metrics = app.add_subcommand("metrics", "Security metric alpha_k for every active measurement");
    add_common(metrics, metric_opts);
    bool relaxation = false;
    bool no_alpha_bar = false;
    std::string rtu_path;
    metrics->add_flag("--relaxation", relaxation, "Use the l1 relaxation instead of exact search");
    metrics->add_flag("--no-alpha-bar", no_alpha_bar, "Skip the all-measurements variant");
    metrics->add_option("--rtu", rtu_path, "RTU grouping file");

    auto* verify = app.add_subcommand("verify", "Check witnesses: rank certificate, stealth, saturation, line invariance");
    add_common(verify, verify_opts);
    std::size_t verify_target_k = 0;
    double factor = 1.5;
    double verify_bias = 100.0;
    verify->add_option("--target", verify_target_k, "Target measurement (1-based, default: all)");
    verify->add_option("--factor", factor, "Susceptance scale factor for the invariance check");
    verify->add_option("--bias", verify_bias, "Bias in MW for the saturation check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*est) return run_estimate(est_opts, est_solver);
        if (*sweep) return run_sweep_command(sweep_opts, sw);
        if (*metrics) return run_metrics(metric_opts, relaxation, no_alpha_bar, rtu_path);
        if (*verify) return run_verify(verify_opts, verify_target_k, factor, verify_bias);
    } catch (const Infeasible& e) {
        std::cerr << "gridsec: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const ParseError& e) {
        std::cerr << "gridsec: parse error: " << e.what() << "\n";
        return kExitInput;
    } catch (const IoError& e) {
        std::cerr << "gridsec: " << e.what() << "\n";
        return kExitInput;
    } catch (const SemanticError& e) {
        std::cerr << "gridsec: invalid input: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "gridsec: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
