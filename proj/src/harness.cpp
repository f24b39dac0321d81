#include "gridsec/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gridsec/error.hpp"

namespace gridsec {

namespace {

using Json = nlohmann::ordered_json;

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// The double that "%.6g" denotes, so JSON output carries six significant digits.
double round6(double v) { return std::strtod(format_number(v).c_str(), nullptr); }

Json number_or_null(const std::optional<double>& v) { return v ? Json(round6(*v)) : Json(nullptr); }

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    if (!failed.exchange(true)) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::string_view status_name(RowStatus s) {
    switch (s) {
        case RowStatus::Ok: return "ok";
        case RowStatus::Diverged: return "diverged";
        case RowStatus::Singular: return "singular";
    }
    return "ok";
}

RowStatus parse_status(std::string_view s) {
    if (s == "ok") return RowStatus::Ok;
    if (s == "diverged") return RowStatus::Diverged;
    if (s == "singular") return RowStatus::Singular;
    throw ParseError("unknown row status '" + std::string(s) + "'", 1, 1);
}

const char* const kCsvColumns[] = {"bias_pu",     "bias_mw",     "false_value_pu", "false_value_mw",
                                   "status",      "iterations",  "estimate_pu",    "estimate_mw",
                                   "alarm",       "max_rn",      "max_index"};
constexpr std::size_t kCsvColumnCount = sizeof kCsvColumns / sizeof kCsvColumns[0];

Json row_to_json(const SweepRow& row, double base) {
    Json j;
    j["bias_pu"] = round6(row.bias);
    j["bias_mw"] = round6(row.bias * base);
    j["false_value_pu"] = round6(row.false_value);
    j["false_value_mw"] = round6(row.false_value * base);
    j["status"] = status_name(row.status);
    j["iterations"] = row.iterations;
    if (row.converged()) {
        j["estimate_pu"] = round6(row.estimate);
        j["estimate_mw"] = round6(row.estimate * base);
        j["alarm"] = row.alarm;
        j["max_rn"] = round6(row.max_rn);
        j["max_index"] = row.max_index ? Json(*row.max_index + 1) : Json(nullptr);
    } else {
        j["estimate_pu"] = nullptr;
        j["estimate_mw"] = nullptr;
        j["alarm"] = nullptr;
        j["max_rn"] = nullptr;
        j["max_index"] = nullptr;
    }
    return j;
}

Json report_to_json(const SweepReport& report) {
    const double base = report.base_mva;
    auto mw = [&](const std::optional<double>& v) { return v ? std::optional<double>(*v * base) : std::nullopt; };
    Json j;
    j["target"] = report.target + 1;
    j["label"] = report.label;
    j["mode"] = to_string(report.mode);
    j["base_mva"] = round6(base);
    j["tau"] = round6(report.tau);
    j["seed"] = report.seed;
    j["alpha"] = report.alpha ? Json(*report.alpha) : Json(nullptr);
    Json rows = Json::array();
    for (const SweepRow& row : report.rows) rows.push_back(row_to_json(row, base));
    j["rows"] = std::move(rows);
    Json summary;
    summary["first_detected_bias_pu"] = number_or_null(report.summary.first_detected_bias);
    summary["first_detected_bias_mw"] = number_or_null(mw(report.summary.first_detected_bias));
    summary["first_divergence_bias_pu"] = number_or_null(report.summary.first_divergence_bias);
    summary["first_divergence_bias_mw"] = number_or_null(mw(report.summary.first_divergence_bias));
    summary["slope"] = number_or_null(report.summary.slope);
    j["summary"] = std::move(summary);
    return j;
}

std::string report_to_csv(const SweepReport& report) {
    std::string out;
    for (std::size_t c = 0; c < kCsvColumnCount; ++c) {
        out += kCsvColumns[c];
        out += c + 1 < kCsvColumnCount ? ',' : '\n';
    }
    const double base = report.base_mva;
    for (const SweepRow& row : report.rows) {
        std::vector<std::string> cells = {format_number(row.bias),        format_number(row.bias * base),
                                          format_number(row.false_value), format_number(row.false_value * base),
                                          std::string(status_name(row.status)), std::to_string(row.iterations)};
        if (row.converged()) {
            cells.push_back(format_number(row.estimate));
            cells.push_back(format_number(row.estimate * base));
            cells.push_back(row.alarm ? "1" : "0");
            cells.push_back(format_number(row.max_rn));
            cells.push_back(row.max_index ? std::to_string(*row.max_index + 1) : "-");
        } else {
            cells.insert(cells.end(), 5, "-");
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            out += cells[c];
            out += c + 1 < cells.size() ? ',' : '\n';
        }
    }
    return out;
}

double parse_double(std::string_view s, std::size_t line, std::size_t column) {
    const std::string text(s);
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) {
        throw ParseError("expected a number, got '" + text + "'", line, column);
    }
    return v;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ParseError(msg, 1, 1);
}

}  // namespace

std::string_view to_string(AttackMode mode) { return mode == AttackMode::Stealthy ? "stealthy" : "naive"; }

AttackMode parse_attack_mode(std::string_view text) {
    if (text == "stealthy") return AttackMode::Stealthy;
    if (text == "naive") return AttackMode::Naive;
    throw PreconditionError("unknown attack mode '" + std::string(text) + "'");
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "json") return ReportFormat::Json;
    if (text == "csv") return ReportFormat::Csv;
    throw PreconditionError("unknown report format '" + std::string(text) + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path.string());
    return ss.str();
}

Scenario load_scenario(const std::filesystem::path& case_path, const std::filesystem::path& measurement_path,
                       const std::filesystem::path& protected_path) {
    Network network = read_case_file(case_path);
    MeasurementSet set = read_measurement_file(measurement_path);
    validate_measurements(network, set);
    std::vector<std::size_t> protected_set;
    if (!protected_path.empty()) {
        protected_set = parse_protected_set(read_text_file(protected_path));
        for (std::size_t k : protected_set) {
            if (k >= set.size()) {
                throw SemanticError("protected index " + std::to_string(k + 1) + " exceeds the measurement count " +
                                    std::to_string(set.size()));
            }
        }
    }
    return {std::move(network), std::move(set), std::move(protected_set)};
}

void ExperimentPlan::validate() const {
    if (biases.empty()) throw PreconditionError("bias schedule is empty");
    if (!std::is_sorted(biases.begin(), biases.end())) throw PreconditionError("bias schedule is not ascending");
    for (double b : biases) {
        if (!std::isfinite(b)) throw PreconditionError("bias schedule has a nonfinite entry");
    }
    if (!(tau > 0.0)) throw PreconditionError("tau must be positive");
    if (!(noise_scale >= 0.0)) throw PreconditionError("noise scale must be nonnegative");
    estimator.validate();
}

std::vector<double> bias_schedule_mw(double start, double step, double end, double base_mva) {
    if (!(step > 0.0)) throw PreconditionError("bias step must be positive");
    if (end < start) throw PreconditionError("bias end is below bias start");
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((end - start) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) out.push_back((start + static_cast<double>(i) * step) / base_mva);
    return out;
}

SweepSummary summarize(const std::vector<SweepRow>& rows) {
    SweepSummary s;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (const SweepRow& row : rows) {
        if (!row.converged()) {
            if (!s.first_divergence_bias) s.first_divergence_bias = row.bias;
            continue;
        }
        if (row.alarm) {
            if (!s.first_detected_bias) s.first_detected_bias = row.bias;
            continue;
        }
        sx += row.false_value;
        sy += row.estimate;
        sxx += row.false_value * row.false_value;
        sxy += row.false_value * row.estimate;
        ++n;
    }
    if (n >= 2) {
        const double dn = static_cast<double>(n);
        const double denom = sxx - sx * sx / dn;
        if (denom > 0.0) s.slope = (sxy - sx * sy / dn) / denom;
    }
    return s;
}

SweepReport run_sweep(const Scenario& scenario, const ExperimentPlan& plan) {
    plan.validate();
    const Network& net = scenario.network;
    const MeasurementSet& set = scenario.set;
    validate_measurements(net, set);
    if (plan.target >= set.size()) {
        throw PreconditionError("target " + std::to_string(plan.target + 1) + " exceeds the measurement count");
    }
    if (!set[plan.target].kind.is_active()) {
        throw PreconditionError("target " + std::to_string(plan.target + 1) + " is not an active-power measurement");
    }
    if (set[plan.target].is_pseudo) {
        throw PreconditionError("target " + std::to_string(plan.target + 1) + " is a pseudo-measurement");
    }
    const Observability obs = observability_check(net, set);
    if (!obs.observable) throw NotObservable("measurement set is not observable");

    SweepReport report;
    report.target = plan.target;
    report.label = set[plan.target].kind.label();
    report.mode = plan.mode;
    report.base_mva = net.base_mva();
    report.tau = plan.tau;
    report.seed = plan.seed;

    Eigen::VectorXd unit = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(set.size()));
    if (plan.mode == AttackMode::Stealthy) {
        const DcModel dc = build_dc_jacobian(net, set);
        const auto prot = protected_rows(set, scenario.protected_set);
        AttackSpec spec;
        spec.target = plan.target;
        spec.protected_set = prot;
        const AttackVector witness = static_cast<std::size_t>(dc.row_count()) <= kExactRowLimit
                                         ? synth_attack(dc, spec)
                                         : [&] {
                                               auto r = relaxed_attack(dc, plan.target, prot);
                                               if (!r) throw Infeasible("target cannot be attacked stealthily");
                                               return *r;
                                           }();
        unit = witness.a;
        report.alpha = witness.cardinality();
    } else {
        unit(static_cast<Eigen::Index>(plan.target)) = 1.0;
        report.alpha = 1;
    }

    const MeasurementSet z =
        simulate_measurements(net, set, StateVector::from_case(net), plan.seed, plan.noise_scale);

    report.rows.resize(plan.biases.size());
    parallel_for(plan.biases.size(), plan.threads, [&](std::size_t i) {
        SweepRow& row = report.rows[i];
        row.bias = plan.biases[i];
        const MeasurementSet za = apply_attack(z, Eigen::VectorXd(plan.biases[i] * unit));
        row.false_value = za[plan.target].value;
        try {
            const EstimationResult est = estimate(net, za, plan.estimator);
            row.iterations = est.iterations;
            const ResidualAnalysis bdd = analyze_residuals(net, za, est, plan.tau, plan.estimator.pseudo_weight);
            row.estimate = est.estimated(static_cast<Eigen::Index>(plan.target));
            row.alarm = bdd.alarm;
            row.max_rn = bdd.max_value;
            row.max_index = bdd.max_index;
        } catch (const EstimatorDiverged& e) {
            row.status = RowStatus::Diverged;
            row.iterations = e.iterations();
        } catch (const NotObservable&) {
            row.status = RowStatus::Singular;
        }
    });
    report.summary = summarize(report.rows);
    return report;
}

std::string format_report(const SweepReport& report, ReportFormat format) {
    if (format == ReportFormat::Csv) return report_to_csv(report);
    return report_to_json(report).dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    std::error_code ec;
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out << text;
        out.close();
        if (!out) {
            std::filesystem::remove(tmp, ec);
            throw IoError("cannot write " + path.string());
        }
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot write " + path.string());
    }
}

void emit_report(const SweepReport& report, ReportFormat format, const std::filesystem::path& path) {
    if (report.rows.empty()) throw PreconditionError("refusing to write a report without rows");
    write_text_file(path, format_report(report, format));
}

SweepReport parse_report_json(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), 1, e.byte);
    }
    try {
        SweepReport report;
        report.target = j.at("target").get<std::size_t>() - 1;
        report.label = j.at("label").get<std::string>();
        report.mode = parse_attack_mode(j.at("mode").get<std::string>());
        report.base_mva = j.at("base_mva").get<double>();
        report.tau = j.at("tau").get<double>();
        report.seed = j.at("seed").get<std::uint64_t>();
        if (!j.at("alpha").is_null()) report.alpha = j.at("alpha").get<std::size_t>();
        for (const Json& r : j.at("rows")) {
            SweepRow row;
            row.bias = r.at("bias_pu").get<double>();
            row.false_value = r.at("false_value_pu").get<double>();
            row.status = parse_status(r.at("status").get<std::string>());
            row.iterations = r.at("iterations").get<int>();
            if (row.converged()) {
                row.estimate = r.at("estimate_pu").get<double>();
                row.alarm = r.at("alarm").get<bool>();
                row.max_rn = r.at("max_rn").get<double>();
                if (!r.at("max_index").is_null()) row.max_index = r.at("max_index").get<std::size_t>() - 1;
            }
            report.rows.push_back(row);
        }
        report.summary = summarize(report.rows);
        return report;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed report: ") + e.what(), 1, 1);
    }
}

SweepReport parse_report_csv(std::string_view text) {
    SweepReport report;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header = true;
    while (pos < text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<std::string_view> cells;
        std::vector<std::size_t> columns;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
            columns.push_back(start + 1);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        if (cells.size() != kCsvColumnCount) {
            throw ParseError("expected " + std::to_string(kCsvColumnCount) + " columns, got " +
                                 std::to_string(cells.size()),
                             line_no, 1);
        }
        if (header) {
            for (std::size_t c = 0; c < kCsvColumnCount; ++c) {
                if (cells[c] != kCsvColumns[c]) throw ParseError("unexpected column header", line_no, columns[c]);
            }
            header = false;
            continue;
        }
        auto num = [&](std::size_t c) { return parse_double(cells[c], line_no, columns[c]); };
        SweepRow row;
        row.bias = num(0);
        row.false_value = num(2);
        if (row.bias != 0.0) report.base_mva = round6(num(1) / row.bias);
        try {
            row.status = parse_status(cells[4]);
        } catch (const ParseError&) {
            throw ParseError("unknown row status '" + std::string(cells[4]) + "'", line_no, columns[4]);
        }
        row.iterations = static_cast<int>(num(5));
        if (row.converged()) {
            row.estimate = num(6);
            row.alarm = num(8) != 0.0;
            row.max_rn = num(9);
            if (cells[10] != "-") row.max_index = static_cast<std::size_t>(num(10)) - 1;
        }
        report.rows.push_back(row);
    }
    require(!header, "missing CSV header");
    report.summary = summarize(report.rows);
    return report;
}

std::size_t histogram_bucket(const std::optional<std::size_t>& alpha) {
    if (!alpha) return 5;
    const std::size_t a = *alpha;
    if (a <= 2) return 0;
    if (a <= 4) return 1;
    if (a <= 10) return 2;
    if (a <= 20) return 3;
    return 4;
}

MetricScan run_metric_scan(const Network& network, const MeasurementSet& set,
                           const std::vector<std::size_t>& protected_set, const MetricScanOptions& options) {
    validate_measurements(network, set);
    const auto prot = protected_rows(set, protected_set);
    const DcModel dc = build_dc_jacobian(network, set);

    auto compute = [&](const DcModel& model, const std::vector<std::size_t>& p) {
        if (options.method == MetricScanMethod::Relaxation) return security_metric_relaxation(model, p);
        return security_metric_exact(model, p, {options.row_limit, options.threads});
    };

    MetricScan scan;
    scan.report = compute(dc, prot);

    if (options.with_alpha_bar) {
        const MeasurementSet all = all_active_measurements(network);
        std::vector<std::size_t> all_prot = all.pseudo_indices();
        for (std::size_t k : prot) {
            for (std::size_t j = 0; j < all.size(); ++j) {
                if (all[j].kind == set[k].kind) all_prot.push_back(j);
            }
        }
        std::sort(all_prot.begin(), all_prot.end());
        all_prot.erase(std::unique(all_prot.begin(), all_prot.end()), all_prot.end());
        const SecurityMetricReport bar = compute(build_dc_jacobian(network, all), all_prot);
        for (MetricEntry& e : scan.report.entries) {
            for (std::size_t j = 0; j < all.size(); ++j) {
                if (all[j].kind != set[e.k].kind) continue;
                if (const MetricEntry* b = bar.find(j)) e.alpha_bar = b->alpha;
                break;
            }
        }
    }
    for (MetricEntry& e : scan.report.entries) {
        ++scan.histogram[histogram_bucket(e.alpha)];
        scan.labels.push_back(set[e.k].kind.label());
        if (options.rtu_groups && e.witness) e.rtus = count_rtus(*e.witness, *options.rtu_groups);
    }
    return scan;
}

std::string format_metric_scan(const MetricScan& scan) {
    Json j;
    j["method"] = scan.report.method == MetricMethod::Exact ? "exact" : "relaxation";
    Json hist;
    for (std::size_t b = 0; b < kHistogramBuckets.size(); ++b) hist[kHistogramBuckets[b]] = scan.histogram[b];
    j["histogram"] = std::move(hist);
    Json metrics = Json::array();
    for (std::size_t i = 0; i < scan.report.entries.size(); ++i) {
        const MetricEntry& e = scan.report.entries[i];
        Json m;
        m["k"] = e.k + 1;
        m["label"] = scan.labels.at(i);
        m["alpha"] = e.alpha ? Json(*e.alpha) : Json(nullptr);
        m["alpha_bar"] = e.alpha_bar ? Json(*e.alpha_bar) : Json(nullptr);
        Json support = Json::array();
        if (e.witness) {
            for (std::size_t k : e.witness->support) support.push_back(k + 1);
        }
        m["support"] = std::move(support);
        m["rtus"] = e.rtus ? Json(*e.rtus) : Json(nullptr);
        metrics.push_back(std::move(m));
    }
    j["metrics"] = std::move(metrics);
    return j.dump(2) + "\n";
}

}  // namespace gridsec
