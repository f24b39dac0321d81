#include "gridsec/network.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <set>
#include <sstream>

#include "gridsec/error.hpp"

namespace gridsec {

namespace {

constexpr double kDegreesPerRadian = 180.0 / std::numbers::pi;

std::string bus_label(int id) { return "bus " + std::to_string(id); }

std::string branch_label(const Branch& br) {
    return "branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus);
}

}  // namespace

Network::Network(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
                 std::vector<int> generator_buses)
    : base_mva_(base_mva),
      buses_(std::move(buses)),
      branches_(std::move(branches)),
      generator_buses_(std::move(generator_buses)) {
    if (!(base_mva_ > 0.0) || !std::isfinite(base_mva_)) {
        throw SemanticError("baseMVA must be positive");
    }
    if (buses_.empty()) throw SemanticError("network has no buses");

    std::map<int, std::size_t> positions;
    std::size_t references = 0;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        const Bus& bus = buses_[i];
        if (bus.id < 1) throw SemanticError("bus id " + std::to_string(bus.id) + " must be >= 1");
        if (!positions.emplace(bus.id, i).second) {
            throw SemanticError("duplicate bus id " + std::to_string(bus.id));
        }
        if (bus.type == BusType::Isolated) {
            throw SemanticError(bus_label(bus.id) + " is marked isolated");
        }
        if (!(bus.vm > 0.0)) throw SemanticError(bus_label(bus.id) + " has non-positive Vm");
        if (bus.is_reference()) {
            ++references;
            reference_ = i;
        }
    }
    if (references == 0) throw SemanticError("no reference bus (type 3)");
    if (references > 1) throw SemanticError("more than one reference bus (type 3)");

    adjacency_.assign(buses_.size(), {});
    for (const Branch& br : branches_) {
        if (!positions.contains(br.from_bus)) {
            throw SemanticError(branch_label(br) + " references unknown bus " + std::to_string(br.from_bus));
        }
        if (!positions.contains(br.to_bus)) {
            throw SemanticError(branch_label(br) + " references unknown bus " + std::to_string(br.to_bus));
        }
        if (br.from_bus == br.to_bus) throw SemanticError(branch_label(br) + " is a self loop");
        if (br.x == 0.0) throw SemanticError(branch_label(br) + " has zero series reactance");
        if (!br.in_service) continue;
        const std::size_t f = positions[br.from_bus];
        const std::size_t t = positions[br.to_bus];
        adjacency_[f].push_back(t);
        adjacency_[t].push_back(f);
    }
    for (auto& adj : adjacency_) {
        std::sort(adj.begin(), adj.end());
        adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    }
    for (int g : generator_buses_) {
        if (!positions.contains(g)) {
            throw SemanticError("generator references unknown bus " + std::to_string(g));
        }
    }

    std::vector<bool> seen(buses_.size(), false);
    std::queue<std::size_t> frontier;
    frontier.push(reference_);
    seen[reference_] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
        const std::size_t i = frontier.front();
        frontier.pop();
        for (std::size_t j : adjacency_[i]) {
            if (!seen[j]) {
                seen[j] = true;
                ++reached;
                frontier.push(j);
            }
        }
    }
    if (reached != buses_.size()) {
        for (std::size_t i = 0; i < buses_.size(); ++i) {
            if (!seen[i]) {
                throw SemanticError("network is disconnected: " + bus_label(buses_[i].id) +
                                    " is not reachable from the reference bus");
            }
        }
    }

    admittance_ = build_admittance(*this);
}

std::size_t Network::index_of(int bus_id) const {
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        if (buses_[i].id == bus_id) return i;
    }
    throw SemanticError("unknown bus " + std::to_string(bus_id));
}

bool Network::has_bus(int bus_id) const noexcept {
    return std::any_of(buses_.begin(), buses_.end(), [&](const Bus& b) { return b.id == bus_id; });
}

bool Network::has_generator(int bus_id) const noexcept {
    return std::find(generator_buses_.begin(), generator_buses_.end(), bus_id) != generator_buses_.end();
}

Network Network::with_branch_status(std::size_t branch, bool in_service) const {
    auto branches = branches_;
    branches.at(branch).in_service = in_service;
    return Network(base_mva_, buses_, std::move(branches), generator_buses_);
}

Network Network::with_branch_impedance_scaled(std::size_t branch, double factor) const {
    auto branches = branches_;
    branches.at(branch).r *= factor;
    branches.at(branch).x *= factor;
    return Network(base_mva_, buses_, std::move(branches), generator_buses_);
}

Network Network::with_bus_shunt(int bus_id, double gs, double bs) const {
    auto buses = buses_;
    Bus& bus = buses.at(index_of(bus_id));
    bus.gs = gs;
    bus.bs = bs;
    return Network(base_mva_, std::move(buses), branches_, generator_buses_);
}

bool Network::operator==(const Network& other) const {
    return base_mva_ == other.base_mva_ && buses_ == other.buses_ && branches_ == other.branches_ &&
           generator_buses_ == other.generator_buses_;
}

Eigen::MatrixXcd build_admittance(const Network& network) {
    const auto n = static_cast<Eigen::Index>(network.bus_count());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t i = 0; i < network.bus_count(); ++i) {
        const Bus& bus = network.buses()[i];
        y(i, i) += std::complex<double>(bus.gs, bus.bs);
    }
    for (const Branch& br : network.branches()) {
        if (!br.in_service) continue;
        const auto f = static_cast<Eigen::Index>(network.index_of(br.from_bus));
        const auto t = static_cast<Eigen::Index>(network.index_of(br.to_bus));
        const std::complex<double> ys = br.series_admittance();
        const std::complex<double> half_charging(0.0, br.charging / 2.0);
        y(f, f) += ys + half_charging;
        y(t, t) += ys + half_charging;
        y(f, t) -= ys;
        y(t, f) -= ys;
    }
    return y;
}

std::vector<int> neighborhood(const Network& network, int bus_id) {
    std::vector<int> ids;
    for (std::size_t j : network.adjacent(network.index_of(bus_id))) ids.push_back(network.buses()[j].id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

// ---------------------------------------------------------------------------
// Case-file text
// ---------------------------------------------------------------------------

namespace {

enum class TokenKind { Identifier, Number, String, Symbol, Newline, End };

struct Token {
    TokenKind kind = TokenKind::End;
    std::string text;
    double number = 0.0;
    std::size_t line = 1;
    std::size_t column = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    Token next() {
        skip_blanks();
        Token tok;
        tok.line = line_;
        tok.column = column_;
        if (pos_ >= text_.size()) return tok;

        const char c = text_[pos_];
        if (c == '\n') {
            advance();
            tok.kind = TokenKind::Newline;
            return tok;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            tok.kind = TokenKind::Identifier;
            while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                           text_[pos_] == '_' || text_[pos_] == '.')) {
                tok.text.push_back(text_[pos_]);
                advance();
            }
            return tok;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
            ((c == '-' || c == '+') && pos_ + 1 < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) || text_[pos_ + 1] == '.'))) {
            return lex_number(tok);
        }
        if (c == '\'' || c == '"') {
            tok.kind = TokenKind::String;
            advance();
            while (pos_ < text_.size() && text_[pos_] != c && text_[pos_] != '\n') {
                tok.text.push_back(text_[pos_]);
                advance();
            }
            if (pos_ >= text_.size() || text_[pos_] != c) {
                throw ParseError("unterminated string", tok.line, tok.column);
            }
            advance();
            return tok;
        }
        tok.kind = TokenKind::Symbol;
        tok.text = std::string(1, c);
        advance();
        return tok;
    }

private:
    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            column_ = 1;
        } else {
            ++column_;
        }
        ++pos_;
    }

    void skip_blanks() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (c == '%') {
                while (pos_ < text_.size() && text_[pos_] != '\n') advance();
            } else if (c == ' ' || c == '\t' || c == '\r') {
                advance();
            } else if (c == '.' && text_.substr(pos_, 3) == "...") {
                // line continuation
                while (pos_ < text_.size() && text_[pos_] != '\n') advance();
                if (pos_ < text_.size()) advance();
            } else {
                break;
            }
        }
    }

    Token lex_number(Token& tok) {
        const std::size_t start = pos_;
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            const bool exponent_sign = (c == '-' || c == '+') && pos_ > start &&
                                       (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E');
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || exponent_sign ||
                ((c == '-' || c == '+') && pos_ == start)) {
                advance();
            } else {
                break;
            }
        }
        tok.text = std::string(text_.substr(start, pos_ - start));
        const char* first = tok.text.data();
        const char* last = first + tok.text.size();
        if (*first == '+') ++first;
        const auto [ptr, ec] = std::from_chars(first, last, tok.number);
        if (ec != std::errc() || ptr != last) {
            throw ParseError("malformed number '" + tok.text + "'", tok.line, tok.column);
        }
        tok.kind = TokenKind::Number;
        return tok;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t column_ = 1;
};

struct MatrixRow {
    std::vector<double> values;
    std::size_t line = 0;
    std::size_t column = 0;
};

struct CaseTables {
    std::optional<double> base_mva;
    std::map<std::string, std::vector<MatrixRow>> matrices;
};

class CaseParser {
public:
    explicit CaseParser(std::string_view text) : lexer_(text) { advance(); }

    CaseTables parse() {
        CaseTables tables;
        while (current_.kind != TokenKind::End) {
            if (current_.kind == TokenKind::Newline || is_symbol(";") || is_symbol(",")) {
                advance();
                continue;
            }
            if (current_.kind == TokenKind::Identifier && current_.text == "function") {
                while (current_.kind != TokenKind::Newline && current_.kind != TokenKind::End) advance();
                continue;
            }
            if (current_.kind != TokenKind::Identifier) {
                throw ParseError("unexpected '" + current_.text + "' at top level", current_.line, current_.column);
            }
            const Token name = current_;
            advance();
            expect_symbol("=");
            const std::string field = name.text.starts_with("mpc.") ? name.text.substr(4) : name.text;
            if (is_symbol("[")) {
                advance();
                tables.matrices[field] = parse_matrix();
            } else if (is_symbol("{")) {
                skip_cell();
            } else if (current_.kind == TokenKind::Number) {
                if (field == "baseMVA") tables.base_mva = current_.number;
                advance();
            } else if (current_.kind == TokenKind::String || current_.kind == TokenKind::Identifier) {
                advance();
            } else {
                throw ParseError("expected a value after '='", current_.line, current_.column);
            }
            end_statement();
        }
        return tables;
    }

private:
    void advance() { current_ = lexer_.next(); }

    bool is_symbol(std::string_view s) const { return current_.kind == TokenKind::Symbol && current_.text == s; }

    void expect_symbol(std::string_view s) {
        if (!is_symbol(s)) {
            const std::string got = current_.kind == TokenKind::Newline ? "end of line"
                                    : current_.kind == TokenKind::End   ? "end of input"
                                                                        : "'" + current_.text + "'";
            throw ParseError("expected '" + std::string(s) + "', got " + got, current_.line, current_.column);
        }
        advance();
    }

    void end_statement() {
        if (is_symbol(";") || current_.kind == TokenKind::Newline || current_.kind == TokenKind::End) {
            if (current_.kind != TokenKind::End) advance();
            return;
        }
        throw ParseError("expected ';' or end of line", current_.line, current_.column);
    }

    std::vector<MatrixRow> parse_matrix() {
        std::vector<MatrixRow> rows;
        MatrixRow row;
        auto flush = [&] {
            if (row.values.empty()) return;
            if (!rows.empty() && rows.front().values.size() != row.values.size()) {
                throw ParseError("row has " + std::to_string(row.values.size()) + " columns, expected " +
                                     std::to_string(rows.front().values.size()),
                                 row.line, row.column);
            }
            rows.push_back(std::move(row));
            row = MatrixRow{};
        };
        while (true) {
            if (current_.kind == TokenKind::End) {
                throw ParseError("unterminated matrix, expected ']'", current_.line, current_.column);
            }
            if (is_symbol("]")) {
                flush();
                advance();
                return rows;
            }
            if (is_symbol(";") || current_.kind == TokenKind::Newline) {
                flush();
                advance();
                continue;
            }
            if (is_symbol(",")) {
                advance();
                continue;
            }
            if (current_.kind != TokenKind::Number) {
                throw ParseError("expected a number, got '" + current_.text + "'", current_.line, current_.column);
            }
            if (row.values.empty()) {
                row.line = current_.line;
                row.column = current_.column;
            }
            row.values.push_back(current_.number);
            advance();
        }
    }

    void skip_cell() {
        const Token open = current_;
        int depth = 0;
        do {
            if (current_.kind == TokenKind::End) {
                throw ParseError("unterminated cell array, expected '}'", open.line, open.column);
            }
            if (is_symbol("{")) ++depth;
            if (is_symbol("}")) --depth;
            advance();
        } while (depth > 0);
    }

    Lexer lexer_;
    Token current_;
};

void require_columns(const MatrixRow& row, std::size_t count, std::string_view table) {
    if (row.values.size() < count) {
        throw ParseError(std::string(table) + " row needs at least " + std::to_string(count) + " columns",
                         row.line, row.column);
    }
}

int integer_cell(const MatrixRow& row, std::size_t col, std::string_view what) {
    const double v = row.values[col];
    if (v != std::floor(v) || std::abs(v) > 1e9) {
        throw ParseError(std::string(what) + " must be an integer", row.line, row.column);
    }
    return static_cast<int>(v);
}

/// Decimal value D with D / scale == value exactly, so text round trips are bit-stable.
double unscaled(double value, double scale) {
    double candidate = value * scale;
    if (candidate / scale == value) return candidate;
    double up = candidate;
    double down = candidate;
    for (int step = 0; step < 16; ++step) {
        up = std::nextafter(up, HUGE_VAL);
        down = std::nextafter(down, -HUGE_VAL);
        if (up / scale == value) return up;
        if (down / scale == value) return down;
    }
    return candidate;
}

std::string format_exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Network parse_case(std::string_view text) {
    const CaseTables tables = CaseParser(text).parse();
    if (!tables.base_mva) throw SemanticError("missing mpc.baseMVA");
    const double base = *tables.base_mva;
    if (!(base > 0.0)) throw SemanticError("baseMVA must be positive");

    const auto bus_it = tables.matrices.find("bus");
    if (bus_it == tables.matrices.end()) throw SemanticError("missing mpc.bus table");
    const auto branch_it = tables.matrices.find("branch");
    if (branch_it == tables.matrices.end()) throw SemanticError("missing mpc.branch table");

    std::vector<Bus> buses;
    for (const MatrixRow& row : bus_it->second) {
        require_columns(row, 9, "bus");
        Bus bus;
        bus.id = integer_cell(row, 0, "bus id");
        const int type = integer_cell(row, 1, "bus type");
        if (type < 1 || type > 4) throw ParseError("bus type must be 1..4", row.line, row.column);
        bus.type = static_cast<BusType>(type);
        bus.pd = row.values[2] / base;
        bus.qd = row.values[3] / base;
        bus.gs = row.values[4] / base;
        bus.bs = row.values[5] / base;
        bus.vm = row.values[7];
        bus.va = row.values[8] / kDegreesPerRadian;
        buses.push_back(bus);
    }

    std::vector<Branch> branches;
    for (const MatrixRow& row : branch_it->second) {
        require_columns(row, 5, "branch");
        Branch br;
        br.from_bus = integer_cell(row, 0, "branch from bus");
        br.to_bus = integer_cell(row, 1, "branch to bus");
        br.r = row.values[2];
        br.x = row.values[3];
        br.charging = row.values[4];
        if (row.values.size() > 8) {
            const double ratio = row.values[8];
            if (ratio != 0.0 && ratio != 1.0) {
                throw SemanticError(branch_label(br) + ": off-nominal tap ratio " + format_exact(ratio) +
                                    " is not supported");
            }
        }
        if (row.values.size() > 9 && row.values[9] != 0.0) {
            throw SemanticError(branch_label(br) + ": phase shifters are not supported");
        }
        if (row.values.size() > 10) br.in_service = row.values[10] > 0.0;
        branches.push_back(br);
    }

    std::vector<int> generators;
    if (const auto gen_it = tables.matrices.find("gen"); gen_it != tables.matrices.end()) {
        for (const MatrixRow& row : gen_it->second) {
            require_columns(row, 1, "gen");
            const bool on = row.values.size() <= 7 || row.values[7] > 0.0;
            const int id = integer_cell(row, 0, "generator bus");
            if (on && std::find(generators.begin(), generators.end(), id) == generators.end()) {
                generators.push_back(id);
            }
        }
    }

    return Network(base, std::move(buses), std::move(branches), std::move(generators));
}

Network read_case_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open case file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_case(buf.str());
}

std::string serialize_case(const Network& network) {
    const double base = network.base_mva();
    std::ostringstream out;
    out << "function mpc = serialized_case\n";
    out << "mpc.version = '2';\n";
    out << "mpc.baseMVA = " << format_exact(base) << ";\n\n";
    out << "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\n";
    out << "mpc.bus = [\n";
    for (const Bus& bus : network.buses()) {
        out << '\t' << bus.id << '\t' << static_cast<int>(bus.type) << '\t' << format_exact(unscaled(bus.pd, base))
            << '\t' << format_exact(unscaled(bus.qd, base)) << '\t' << format_exact(unscaled(bus.gs, base)) << '\t'
            << format_exact(unscaled(bus.bs, base)) << "\t1\t" << format_exact(bus.vm) << '\t'
            << format_exact(unscaled(bus.va, kDegreesPerRadian)) << "\t0\t1\t1.1\t0.9;\n";
    }
    out << "];\n\n";
    out << "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\n";
    out << "mpc.gen = [\n";
    for (int g : network.generator_buses()) out << '\t' << g << "\t0\t0\t0\t0\t1\t" << format_exact(base) << "\t1;\n";
    out << "];\n\n";
    out << "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\n";
    out << "mpc.branch = [\n";
    for (const Branch& br : network.branches()) {
        out << '\t' << br.from_bus << '\t' << br.to_bus << '\t' << format_exact(br.r) << '\t' << format_exact(br.x)
            << '\t' << format_exact(br.charging) << "\t0\t0\t0\t0\t0\t" << (br.in_service ? 1 : 0) << ";\n";
    }
    out << "];\n";
    return out.str();
}

}  // namespace gridsec
