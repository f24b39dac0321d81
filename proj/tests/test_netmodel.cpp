#include <doctest.h>

#include <complex>
#include <string>

#include "gridsec/error.hpp"
#include "gridsec/network.hpp"
#include "support.hpp"

using namespace gridsec;

namespace {

const char* kTwoBus = R"(function mpc = two
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 0 1 1.1 0.9;
  2 1 50 10 0 0 1 1 0 0 1 1.1 0.9;
];
mpc.branch = [
  1 2 0 0.1 0 0 0 0 0 0 1;
];
)";

std::string replace(std::string text, const std::string& from, const std::string& to) {
    text.replace(text.find(from), from.size(), to);
    return text;
}

}  // namespace

TEST_CASE("minimal two-bus case") {
    const Network net = parse_case(kTwoBus);
    CHECK(net.bus_count() == 2);
    CHECK(net.branches().size() == 1);
    CHECK(net.buses()[0].is_reference());
    CHECK(net.reference_index() == 0);
    CHECK(net.state_dimension() == 3);
    CHECK(net.buses()[1].pd == doctest::Approx(0.5));
}

TEST_CASE("IEEE 14-bus case counts") {
    const Network net = testing::load_case("case14.m");
    CHECK(net.bus_count() == 14);
    CHECK(net.branches().size() == 20);
    CHECK(net.buses()[net.reference_index()].id == 1);
    CHECK(net.generator_buses() == std::vector<int>{1, 2, 3, 6, 8});
}

TEST_CASE("dangling branch endpoint names the bus") {
    const std::string text = replace(kTwoBus, "1 2 0 0.1", "1 99 0 0.1");
    try {
        parse_case(text);
        FAIL("expected SemanticError");
    } catch (const SemanticError& e) {
        CHECK(std::string(e.what()).find("99") != std::string::npos);
    }
}

TEST_CASE("semantic errors") {
    SUBCASE("duplicate bus id") {
        CHECK_THROWS_AS(parse_case(replace(kTwoBus, "  2 1 50", "  1 1 50")), SemanticError);
    }
    SUBCASE("no reference bus") { CHECK_THROWS_AS(parse_case(replace(kTwoBus, "1 3 0", "1 1 0")), SemanticError); }
    SUBCASE("two reference buses") {
        CHECK_THROWS_AS(parse_case(replace(kTwoBus, "2 1 50", "2 3 50")), SemanticError);
    }
    SUBCASE("disconnected graph") {
        CHECK_THROWS_AS(parse_case(replace(kTwoBus, "0 0 0 0 1;\n];", "0 0 0 0 0;\n];")), SemanticError);
    }
    SUBCASE("off-nominal tap") {
        CHECK_THROWS_AS(parse_case(replace(kTwoBus, "0 0 0 0 0 0 1;\n];", "0 0 0 0.97 0 1;\n];")), SemanticError);
    }
    SUBCASE("phase shifter") {
        CHECK_THROWS_AS(parse_case(replace(kTwoBus, "0 0 0 0 0 0 1;\n];", "0 0 0 0 5 1;\n];")), SemanticError);
    }
    SUBCASE("self loop") { CHECK_THROWS_AS(parse_case(replace(kTwoBus, "1 2 0 0.1", "2 2 0 0.1")), SemanticError); }
}

TEST_CASE("syntax errors carry line and column") {
    try {
        parse_case(replace(kTwoBus, "2 1 50 10", "2 1 5x 10"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 5);
        CHECK(e.column() > 1);
    }
    CHECK_THROWS_AS(parse_case(replace(kTwoBus, "  2 1 50 10 0 0 1 1 0 0 1 1.1 0.9;", "  2 1 50;")), ParseError);
    CHECK_THROWS_AS(parse_case(replace(kTwoBus, "mpc.branch = [", "mpc.branch = [ [")), ParseError);
}

TEST_CASE("comments and continuation lines are accepted") {
    const std::string text = replace(kTwoBus, "  2 1 50 10 0 0 1 1 0 0 1 1.1 0.9;",
                                     "  % load bus\n  2 1 50 10 0 0 ...\n 1 1 0 0 1 1.1 0.9; % trailing");
    const Network net = parse_case(text);
    CHECK(net.bus_count() == 2);
    CHECK(net.buses()[1].pd == doctest::Approx(0.5));
}

TEST_CASE("admittance of a single lossless branch") {
    const Network net = parse_case(kTwoBus);
    const Eigen::MatrixXcd& y = net.admittance();
    using C = std::complex<double>;
    CHECK(std::abs(y(0, 0) - C(0, -10)) < 1e-12);
    CHECK(std::abs(y(0, 1) - C(0, 10)) < 1e-12);
    CHECK(std::abs(y(1, 0) - C(0, 10)) < 1e-12);
    CHECK(std::abs(y(1, 1) - C(0, -10)) < 1e-12);
    CHECK(build_admittance(net).isApprox(y));
}

TEST_CASE("bus shunt touches only the diagonal") {
    const Network net = testing::load_case("case3.m");
    const Network shunted = net.with_bus_shunt(1, 0.0, net.buses()[0].bs + 0.05);
    Eigen::MatrixXcd diff = shunted.admittance() - net.admittance();
    CHECK(diff(0, 0).imag() == doctest::Approx(0.05));
    CHECK(diff(0, 0).real() == doctest::Approx(0.0));
    diff(0, 0) = 0.0;
    CHECK(diff.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("admittance rows sum to zero without shunts") {
    const Network net = testing::load_case("case2.m");
    CHECK(net.admittance().rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);

    std::vector<Bus> buses = testing::load_case("case14.m").buses();
    std::vector<Branch> branches = testing::load_case("case14.m").branches();
    for (Bus& b : buses) b.gs = b.bs = 0.0;
    for (Branch& br : branches) br.charging = 0.0;
    const Network bare(100.0, buses, branches);
    CHECK(bare.admittance().rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("removing a branch changes exactly four entries") {
    const Network net = testing::load_case("case14.m");
    const std::size_t b = 6;  // 4-5, inside the meshed part
    const Network cut = net.with_branch_status(b, false);
    const Eigen::MatrixXcd diff = cut.admittance() - net.admittance();
    const auto i = static_cast<Eigen::Index>(net.index_of(net.branches()[b].from_bus));
    const auto j = static_cast<Eigen::Index>(net.index_of(net.branches()[b].to_bus));
    int changed = 0;
    for (Eigen::Index r = 0; r < diff.rows(); ++r) {
        for (Eigen::Index c = 0; c < diff.cols(); ++c) {
            if (std::abs(diff(r, c)) > 0.0) {
                ++changed;
                CHECK(((r == i || r == j) && (c == i || c == j)));
            }
        }
    }
    CHECK(changed == 4);
}

TEST_CASE("out-of-service bridge disconnects the network") {
    const Network net = parse_case(kTwoBus);
    CHECK_THROWS_AS(net.with_branch_status(0, false), SemanticError);
}

TEST_CASE("neighborhood") {
    CHECK(neighborhood(parse_case(kTwoBus), 1) == std::vector<int>{2});
    const Network net = testing::load_case("case14.m");
    CHECK(neighborhood(net, 4) == std::vector<int>{2, 3, 5, 7, 9});
    CHECK(neighborhood(net, 8) == std::vector<int>{7});
    CHECK_THROWS_AS(neighborhood(net, 42), SemanticError);

    // Star: every leaf hangs off bus 1.
    std::vector<Bus> buses(5);
    std::vector<Branch> branches;
    for (int i = 0; i < 5; ++i) buses[static_cast<std::size_t>(i)].id = i + 1;
    buses[0].type = BusType::Reference;
    for (int leaf = 2; leaf <= 5; ++leaf) branches.push_back({1, leaf, 0.0, 0.1, 0.0, true});
    const Network star(100.0, buses, branches);
    CHECK(neighborhood(star, 1) == std::vector<int>{2, 3, 4, 5});
    CHECK(neighborhood(star, 3) == std::vector<int>{1});

    // A parallel out-of-service branch does not count as adjacency.
    branches.push_back({2, 3, 0.0, 0.1, 0.0, false});
    const Network star2(100.0, buses, branches);
    CHECK(neighborhood(star2, 2) == std::vector<int>{1});
}

TEST_CASE("serialize then parse is stable") {
    for (const char* name : {"case2.m", "case3.m", "case4.m", "case14.m"}) {
        CAPTURE(name);
        const Network net = testing::load_case(name);
        const std::string once = serialize_case(net);
        const Network back = parse_case(once);
        CHECK(back == net);
        CHECK(serialize_case(back) == once);
    }
}

TEST_CASE("missing file is an I/O error") {
    CHECK_THROWS_AS(read_case_file(testing::data_path("does-not-exist.m")), IoError);
}
