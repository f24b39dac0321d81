#include "gridsec/measurement.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "gridsec/error.hpp"

namespace gridsec {

namespace {

/// A measurement resolved against network positions.
struct BoundRow {
    MeasurementType type;
    Eigen::Index i = 0;  // measuring bus
    Eigen::Index j = 0;  // far end, flows only
    double g = 0.0;      // series conductance
    double b = 0.0;      // series susceptance
    double b_lossless = 0.0;
    double half_charging = 0.0;
};

std::vector<BoundRow> bind(const Network& network, const MeasurementSet& set) {
    std::vector<BoundRow> rows;
    rows.reserve(set.size());
    for (std::size_t k = 0; k < set.size(); ++k) {
        const MeasurementKind& kind = set[k].kind;
        const std::string where = "measurement " + std::to_string(k + 1) + " (" + kind.label() + ")";
        if (!network.has_bus(kind.bus)) {
            throw SemanticError(where + ": unknown bus " + std::to_string(kind.bus));
        }
        BoundRow row{kind.type};
        row.i = static_cast<Eigen::Index>(network.index_of(kind.bus));
        if (kind.is_flow()) {
            if (!network.has_bus(kind.to_bus)) {
                throw SemanticError(where + ": unknown bus " + std::to_string(kind.to_bus));
            }
            row.j = static_cast<Eigen::Index>(network.index_of(kind.to_bus));
            const Branch* match = nullptr;
            for (const Branch& br : network.branches()) {
                const bool connects = (br.from_bus == kind.bus && br.to_bus == kind.to_bus) ||
                                      (br.from_bus == kind.to_bus && br.to_bus == kind.bus);
                if (!connects || !br.in_service) continue;
                if (match != nullptr) throw SemanticError(where + ": parallel branches make the flow ambiguous");
                match = &br;
            }
            if (match == nullptr) throw SemanticError(where + ": no in-service branch between the buses");
            row.g = match->series_conductance();
            row.b = match->series_susceptance();
            row.b_lossless = match->lossless_susceptance();
            row.half_charging = match->charging / 2.0;
        }
        rows.push_back(row);
    }
    return rows;
}

Eigen::Index angle_column(const Network& network, Eigen::Index bus) {
    const auto ref = static_cast<Eigen::Index>(network.reference_index());
    if (bus == ref) return -1;
    return bus < ref ? bus : bus - 1;
}

Eigen::Index magnitude_column(const Network& network, Eigen::Index bus) {
    return static_cast<Eigen::Index>(network.bus_count()) - 1 + bus;
}

Eigen::MatrixXd select(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows, Eigen::Index col0,
                       Eigen::Index cols) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.row(static_cast<Eigen::Index>(r)) = m.block(static_cast<Eigen::Index>(rows[r]), col0, 1, cols);
    }
    return out;
}

}  // namespace

StateVector StateVector::flat_start(const Network& network) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

StateVector StateVector::from_case(const Network& network) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    StateVector x{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    const double ref_angle = network.buses()[network.reference_index()].va;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Bus& bus = network.buses()[static_cast<std::size_t>(i)];
        x.angle(i) = bus.va - ref_angle;
        x.magnitude(i) = bus.vm;
    }
    return x;
}

StateVector StateVector::from_vector(const Network& network, const Eigen::VectorXd& v) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    if (v.size() != 2 * n - 1) throw PreconditionError("state vector has wrong dimension");
    StateVector x{Eigen::VectorXd::Zero(n), v.tail(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index col = angle_column(network, i);
        if (col >= 0) x.angle(i) = v(col);
    }
    return x;
}

Eigen::VectorXd StateVector::to_vector(const Network& network) const {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    Eigen::VectorXd v(2 * n - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index col = angle_column(network, i);
        if (col >= 0) v(col) = angle(i);
    }
    v.tail(n) = magnitude;
    return v;
}

std::string MeasurementKind::label() const {
    switch (type) {
        case MeasurementType::ActiveFlow: return "PFLOW " + std::to_string(bus) + " " + std::to_string(to_bus);
        case MeasurementType::ReactiveFlow: return "QFLOW " + std::to_string(bus) + " " + std::to_string(to_bus);
        case MeasurementType::ActiveInjection: return "PINJ " + std::to_string(bus);
        case MeasurementType::ReactiveInjection: return "QINJ " + std::to_string(bus);
        case MeasurementType::VoltageMagnitude: return "VMAG " + std::to_string(bus);
    }
    return "?";
}

Eigen::VectorXd MeasurementSet::values() const {
    Eigen::VectorXd z(static_cast<Eigen::Index>(items.size()));
    for (std::size_t k = 0; k < items.size(); ++k) z(static_cast<Eigen::Index>(k)) = items[k].value;
    return z;
}

std::vector<std::size_t> MeasurementSet::active_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (items[k].kind.is_active()) out.push_back(k);
    }
    return out;
}

std::vector<std::size_t> MeasurementSet::reactive_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (!items[k].kind.is_active()) out.push_back(k);
    }
    return out;
}

std::vector<std::size_t> MeasurementSet::pseudo_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < items.size(); ++k) {
        if (items[k].is_pseudo) out.push_back(k);
    }
    return out;
}

Eigen::Index angle_column_of(const Network& network, int bus_id) {
    return angle_column(network, static_cast<Eigen::Index>(network.index_of(bus_id)));
}

void validate_measurements(const Network& network, const MeasurementSet& set) {
    (void)bind(network, set);
    for (std::size_t k = 0; k < set.size(); ++k) {
        if (!(set[k].variance > 0.0) || !std::isfinite(set[k].variance)) {
            throw SemanticError("measurement " + std::to_string(k + 1) + ": variance must be positive");
        }
    }
}

Eigen::VectorXd eval_h(const Network& network, const MeasurementSet& set, const StateVector& x) {
    const auto rows = bind(network, set);
    const Eigen::MatrixXcd& y = network.admittance();
    const auto& th = x.angle;
    const auto& v = x.magnitude;
    Eigen::VectorXd h(static_cast<Eigen::Index>(rows.size()));

    for (std::size_t k = 0; k < rows.size(); ++k) {
        const BoundRow& row = rows[k];
        const Eigen::Index i = row.i;
        double value = 0.0;
        switch (row.type) {
            case MeasurementType::ActiveFlow: {
                const double t = th(i) - th(row.j);
                value = v(i) * v(i) * row.g - v(i) * v(row.j) * (row.g * std::cos(t) + row.b * std::sin(t));
                break;
            }
            case MeasurementType::ReactiveFlow: {
                const double t = th(i) - th(row.j);
                value = -v(i) * v(i) * (row.b + row.half_charging) -
                        v(i) * v(row.j) * (row.g * std::sin(t) - row.b * std::cos(t));
                break;
            }
            case MeasurementType::ActiveInjection:
            case MeasurementType::ReactiveInjection: {
                const bool active = row.type == MeasurementType::ActiveInjection;
                double sum = active ? v(i) * y(i, i).real() : -v(i) * y(i, i).imag();
                for (std::size_t jj : network.adjacent(static_cast<std::size_t>(i))) {
                    const auto j = static_cast<Eigen::Index>(jj);
                    const double t = th(i) - th(j);
                    const double g = y(i, j).real();
                    const double b = y(i, j).imag();
                    sum += v(j) * (active ? g * std::cos(t) + b * std::sin(t) : g * std::sin(t) - b * std::cos(t));
                }
                value = v(i) * sum;
                break;
            }
            case MeasurementType::VoltageMagnitude: value = v(i); break;
        }
        h(static_cast<Eigen::Index>(k)) = value;
    }
    return h;
}

JacobianBlocks eval_jacobian(const Network& network, const MeasurementSet& set, const StateVector& x) {
    const auto rows = bind(network, set);
    const Eigen::MatrixXcd& y = network.admittance();
    const auto& th = x.angle;
    const auto& v = x.magnitude;
    const auto m = static_cast<Eigen::Index>(rows.size());
    const auto n = static_cast<Eigen::Index>(network.state_dimension());

    JacobianBlocks jac;
    jac.full = Eigen::MatrixXd::Zero(m, n);
    jac.angle_columns = static_cast<Eigen::Index>(network.bus_count()) - 1;
    jac.active_rows = set.active_indices();
    jac.reactive_rows = set.reactive_indices();

    for (Eigen::Index k = 0; k < m; ++k) {
        const BoundRow& row = rows[static_cast<std::size_t>(k)];
        const Eigen::Index i = row.i;
        auto d_angle = [&](Eigen::Index bus, double value) {
            const Eigen::Index col = angle_column(network, bus);
            if (col >= 0) jac.full(k, col) += value;
        };
        auto d_mag = [&](Eigen::Index bus, double value) { jac.full(k, magnitude_column(network, bus)) += value; };

        switch (row.type) {
            case MeasurementType::ActiveFlow: {
                const Eigen::Index j = row.j;
                const double t = th(i) - th(j);
                const double c = std::cos(t);
                const double s = std::sin(t);
                const double dt = v(i) * v(j) * (row.g * s - row.b * c);
                d_angle(i, dt);
                d_angle(j, -dt);
                d_mag(i, 2.0 * v(i) * row.g - v(j) * (row.g * c + row.b * s));
                d_mag(j, -v(i) * (row.g * c + row.b * s));
                break;
            }
            case MeasurementType::ReactiveFlow: {
                const Eigen::Index j = row.j;
                const double t = th(i) - th(j);
                const double c = std::cos(t);
                const double s = std::sin(t);
                const double dt = -v(i) * v(j) * (row.g * c + row.b * s);
                d_angle(i, dt);
                d_angle(j, -dt);
                d_mag(i, -2.0 * v(i) * (row.b + row.half_charging) - v(j) * (row.g * s - row.b * c));
                d_mag(j, -v(i) * (row.g * s - row.b * c));
                break;
            }
            case MeasurementType::ActiveInjection: {
                double d_self_angle = 0.0;
                double d_self_mag = 2.0 * v(i) * y(i, i).real();
                for (std::size_t jj : network.adjacent(static_cast<std::size_t>(i))) {
                    const auto j = static_cast<Eigen::Index>(jj);
                    const double t = th(i) - th(j);
                    const double g = y(i, j).real();
                    const double b = y(i, j).imag();
                    const double c = std::cos(t);
                    const double s = std::sin(t);
                    d_self_angle += v(i) * v(j) * (-g * s + b * c);
                    d_self_mag += v(j) * (g * c + b * s);
                    d_angle(j, v(i) * v(j) * (g * s - b * c));
                    d_mag(j, v(i) * (g * c + b * s));
                }
                d_angle(i, d_self_angle);
                d_mag(i, d_self_mag);
                break;
            }
            case MeasurementType::ReactiveInjection: {
                double d_self_angle = 0.0;
                double d_self_mag = -2.0 * v(i) * y(i, i).imag();
                for (std::size_t jj : network.adjacent(static_cast<std::size_t>(i))) {
                    const auto j = static_cast<Eigen::Index>(jj);
                    const double t = th(i) - th(j);
                    const double g = y(i, j).real();
                    const double b = y(i, j).imag();
                    const double c = std::cos(t);
                    const double s = std::sin(t);
                    d_self_angle += v(i) * v(j) * (g * c + b * s);
                    d_self_mag += v(j) * (g * s - b * c);
                    d_angle(j, -v(i) * v(j) * (g * c + b * s));
                    d_mag(j, v(i) * (g * s - b * c));
                }
                d_angle(i, d_self_angle);
                d_mag(i, d_self_mag);
                break;
            }
            case MeasurementType::VoltageMagnitude: d_mag(i, 1.0); break;
        }
    }
    return jac;
}

Eigen::MatrixXd JacobianBlocks::p_theta() const { return select(full, active_rows, 0, angle_columns); }
Eigen::MatrixXd JacobianBlocks::p_v() const {
    return select(full, active_rows, angle_columns, full.cols() - angle_columns);
}
Eigen::MatrixXd JacobianBlocks::q_theta() const { return select(full, reactive_rows, 0, angle_columns); }
Eigen::MatrixXd JacobianBlocks::q_v() const {
    return select(full, reactive_rows, angle_columns, full.cols() - angle_columns);
}

Eigen::Index DcModel::row_of(std::size_t k) const {
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] == k) return static_cast<Eigen::Index>(r);
    }
    return -1;
}

DcModel build_dc_jacobian(const Network& network, const MeasurementSet& set) {
    const auto bound = bind(network, set);
    DcModel model;
    model.rows = set.active_indices();
    if (model.rows.empty()) throw PreconditionError("measurement set has no active-power rows");
    model.measurement_count = set.size();
    for (std::size_t k : model.rows) model.kinds.push_back(set[k].kind);
    const auto cols = static_cast<Eigen::Index>(network.bus_count()) - 1;
    model.h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(model.rows.size()), cols);

    auto add = [&](Eigen::Index r, Eigen::Index bus, double value) {
        const Eigen::Index col = angle_column(network, bus);
        if (col >= 0) model.h(r, col) += value;
    };
    for (std::size_t r = 0; r < model.rows.size(); ++r) {
        const BoundRow& row = bound[model.rows[r]];
        const auto rr = static_cast<Eigen::Index>(r);
        if (row.type == MeasurementType::ActiveFlow) {
            add(rr, row.i, -row.b_lossless);
            add(rr, row.j, row.b_lossless);
            continue;
        }
        const int bus_id = network.buses()[static_cast<std::size_t>(row.i)].id;
        for (const Branch& br : network.branches()) {
            if (!br.in_service || (br.from_bus != bus_id && br.to_bus != bus_id)) continue;
            const int other_id = br.from_bus == bus_id ? br.to_bus : br.from_bus;
            const auto other = static_cast<Eigen::Index>(network.index_of(other_id));
            add(rr, row.i, -br.lossless_susceptance());
            add(rr, other, br.lossless_susceptance());
        }
    }
    return model;
}

MeasurementSet simulate_measurements(const Network& network, const MeasurementSet& set, const StateVector& x_true,
                                     std::uint64_t noise_seed, double noise_scale) {
    const Eigen::VectorXd h = eval_h(network, set, x_true);
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    MeasurementSet out = set;
    for (std::size_t k = 0; k < out.size(); ++k) {
        Measurement& meas = out[k];
        meas.value = h(static_cast<Eigen::Index>(k));
        if (meas.is_pseudo || noise_scale == 0.0) continue;
        meas.value += noise_scale * std::sqrt(meas.variance) * normal(rng);
    }
    return out;
}

double KindSigmas::of(MeasurementType type) const {
    switch (type) {
        case MeasurementType::ActiveFlow: return active_flow;
        case MeasurementType::ReactiveFlow: return reactive_flow;
        case MeasurementType::ActiveInjection: return active_injection;
        case MeasurementType::ReactiveInjection: return reactive_injection;
        case MeasurementType::VoltageMagnitude: return voltage;
    }
    return 1.0;
}

bool is_zero_injection_bus(const Network& network, int bus_id) {
    const Bus& bus = network.buses()[network.index_of(bus_id)];
    return bus.type == BusType::PQ && bus.pd == 0.0 && bus.qd == 0.0 && bus.gs == 0.0 && bus.bs == 0.0 &&
           !network.has_generator(bus_id);
}

namespace {

Measurement make(const Network& network, MeasurementKind kind, const KindSigmas& sigmas) {
    const double sigma = sigmas.of(kind.type);
    const bool injection =
        kind.type == MeasurementType::ActiveInjection || kind.type == MeasurementType::ReactiveInjection;
    return {kind, 0.0, sigma * sigma, injection && is_zero_injection_bus(network, kind.bus)};
}

}  // namespace

MeasurementSet default_measurement_set(const Network& network, const KindSigmas& sigmas) {
    MeasurementSet set;
    for (const Branch& br : network.branches()) {
        if (br.in_service) set.items.push_back(make(network, MeasurementKind::active_flow(br.from_bus, br.to_bus), sigmas));
    }
    for (const Bus& bus : network.buses()) {
        set.items.push_back(make(network, MeasurementKind::active_injection(bus.id), sigmas));
    }
    for (const Branch& br : network.branches()) {
        if (br.in_service) {
            set.items.push_back(make(network, MeasurementKind::reactive_flow(br.from_bus, br.to_bus), sigmas));
        }
    }
    for (const Bus& bus : network.buses()) {
        set.items.push_back(make(network, MeasurementKind::reactive_injection(bus.id), sigmas));
    }
    for (const Bus& bus : network.buses()) set.items.push_back(make(network, MeasurementKind::voltage(bus.id), sigmas));
    return set;
}

MeasurementSet all_active_measurements(const Network& network, const KindSigmas& sigmas) {
    MeasurementSet set;
    for (const Branch& br : network.branches()) {
        if (!br.in_service) continue;
        set.items.push_back(make(network, MeasurementKind::active_flow(br.from_bus, br.to_bus), sigmas));
        set.items.push_back(make(network, MeasurementKind::active_flow(br.to_bus, br.from_bus), sigmas));
    }
    for (const Bus& bus : network.buses()) {
        set.items.push_back(make(network, MeasurementKind::active_injection(bus.id), sigmas));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Measurement-set text
// ---------------------------------------------------------------------------

namespace {

struct Field {
    std::string_view text;
    std::size_t column;
};

std::vector<Field> split_fields(std::string_view line) {
    std::vector<Field> fields;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
        if (pos >= line.size()) break;
        const std::size_t start = pos;
        while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') ++pos;
        fields.push_back({line.substr(start, pos - start), start + 1});
    }
    return fields;
}

int parse_bus(const Field& f, std::size_t line) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(f.text.data(), f.text.data() + f.text.size(), value);
    if (ec != std::errc() || ptr != f.text.data() + f.text.size()) {
        throw ParseError("expected a bus id, got '" + std::string(f.text) + "'", line, f.column);
    }
    return value;
}

double parse_sigma(const Field& f, std::size_t line) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(f.text.data(), f.text.data() + f.text.size(), value);
    if (ec != std::errc() || ptr != f.text.data() + f.text.size()) {
        throw ParseError("expected sigma, got '" + std::string(f.text) + "'", line, f.column);
    }
    if (!(value > 0.0) || !std::isfinite(value)) throw ParseError("sigma must be positive", line, f.column);
    return value;
}

}  // namespace

MeasurementSet parse_measurement_set(std::string_view text) {
    MeasurementSet set;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t end = text.find('\n', pos);
        const std::string_view line = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
        pos = end == std::string_view::npos ? text.size() : end + 1;
        ++line_no;

        const auto fields = split_fields(line);
        if (fields.empty()) {
            throw ParseError("empty line; every line defines one measurement", line_no, 1);
        }
        const std::string_view kind = fields[0].text;
        MeasurementType type;
        if (kind == "PFLOW") {
            type = MeasurementType::ActiveFlow;
        } else if (kind == "QFLOW") {
            type = MeasurementType::ReactiveFlow;
        } else if (kind == "PINJ") {
            type = MeasurementType::ActiveInjection;
        } else if (kind == "QINJ") {
            type = MeasurementType::ReactiveInjection;
        } else if (kind == "VMAG") {
            type = MeasurementType::VoltageMagnitude;
        } else {
            throw ParseError("unknown measurement kind '" + std::string(kind) + "'", line_no, fields[0].column);
        }

        const bool flow = type == MeasurementType::ActiveFlow || type == MeasurementType::ReactiveFlow;
        const std::size_t required = flow ? 4 : 3;
        if (fields.size() < required) {
            throw ParseError("too few fields for " + std::string(kind), line_no, line.size() + 1);
        }
        Measurement meas;
        meas.kind.type = type;
        meas.kind.bus = parse_bus(fields[1], line_no);
        if (flow) meas.kind.to_bus = parse_bus(fields[2], line_no);
        const double sigma = parse_sigma(fields[required - 1], line_no);
        meas.variance = sigma * sigma;
        if (fields.size() > required) {
            if (fields[required].text != "PSEUDO" || fields.size() > required + 1) {
                const Field& extra = fields.size() > required + 1 && fields[required].text == "PSEUDO"
                                         ? fields[required + 1]
                                         : fields[required];
                throw ParseError("unexpected field '" + std::string(extra.text) + "'", line_no, extra.column);
            }
            meas.is_pseudo = true;
        }
        set.items.push_back(meas);
    }
    return set;
}

MeasurementSet read_measurement_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open measurement file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_measurement_set(buf.str());
}

std::string serialize_measurement_set(const MeasurementSet& set) {
    std::string out;
    char sigma[32];
    for (const Measurement& meas : set.items) {
        std::snprintf(sigma, sizeof sigma, "%.17g", std::sqrt(meas.variance));
        out += meas.kind.label();
        out += ' ';
        out += sigma;
        if (meas.is_pseudo) out += " PSEUDO";
        out += '\n';
    }
    return out;
}

}  // namespace gridsec
