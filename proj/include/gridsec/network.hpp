#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace gridsec {

enum class BusType { PQ = 1, PV = 2, Reference = 3, Isolated = 4 };

/// One bus of the bus-branch model. Electrical quantities are per-unit on the
/// case base; angles are radians.
struct Bus {
    int id = 0;
    BusType type = BusType::PQ;
    double pd = 0.0;  ///< active load
    double qd = 0.0;  ///< reactive load
    double gs = 0.0;  ///< shunt conductance g_si
    double bs = 0.0;  ///< shunt susceptance b_si
    double vm = 1.0;  ///< voltage magnitude of the case operating point
    double va = 0.0;  ///< voltage angle of the case operating point

    bool is_reference() const noexcept { return type == BusType::Reference; }
    bool operator==(const Bus&) const = default;
};

struct Branch {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double charging = 0.0;  ///< total line charging; half is placed at each end
    bool in_service = true;

    /// Series admittance g_ij + j b_ij = 1 / (r + jx).
    std::complex<double> series_admittance() const { return 1.0 / std::complex<double>(r, x); }
    double series_conductance() const { return series_admittance().real(); }
    double series_susceptance() const { return series_admittance().imag(); }
    /// Susceptance with the series resistance dropped, -1/x.
    double lossless_susceptance() const { return -1.0 / x; }

    bool operator==(const Branch&) const = default;
};

/// Validated bus-branch network. Immutable once constructed; the nodal
/// admittance matrix is assembled at construction.
class Network {
public:
    /// Validates and assembles. Throws SemanticError on duplicate ids, dangling
    /// endpoints, reference-bus count other than one, or a disconnected graph.
    Network(double base_mva, std::vector<Bus> buses, std::vector<Branch> branches,
            std::vector<int> generator_buses = {});

    double base_mva() const noexcept { return base_mva_; }
    const std::vector<Bus>& buses() const noexcept { return buses_; }
    const std::vector<Branch>& branches() const noexcept { return branches_; }
    const std::vector<int>& generator_buses() const noexcept { return generator_buses_; }
    const Eigen::MatrixXcd& admittance() const noexcept { return admittance_; }

    std::size_t bus_count() const noexcept { return buses_.size(); }
    /// Number of state variables, 2N - 1.
    std::size_t state_dimension() const noexcept { return 2 * buses_.size() - 1; }

    /// Position of a bus id in buses(). Throws SemanticError for unknown ids.
    std::size_t index_of(int bus_id) const;
    bool has_bus(int bus_id) const noexcept;
    std::size_t reference_index() const noexcept { return reference_; }
    bool has_generator(int bus_id) const noexcept;

    /// Positions (into buses()) of the buses adjacent to position i through
    /// in-service branches, sorted and without duplicates.
    const std::vector<std::size_t>& adjacent(std::size_t i) const { return adjacency_[i]; }

    /// Copies with one branch modified; the result is revalidated.
    Network with_branch_status(std::size_t branch, bool in_service) const;
    Network with_branch_impedance_scaled(std::size_t branch, double factor) const;
    Network with_bus_shunt(int bus_id, double gs, double bs) const;

    bool operator==(const Network& other) const;

private:
    double base_mva_;
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    std::vector<int> generator_buses_;
    std::vector<std::vector<std::size_t>> adjacency_;
    std::size_t reference_ = 0;
    Eigen::MatrixXcd admittance_;
};

/// Parses MATPOWER-style case text (mpc.baseMVA, mpc.bus, mpc.branch, mpc.gen).
/// Throws ParseError with line/column for malformed text and SemanticError for
/// models that fail validation, including off-nominal taps and phase shifters.
Network parse_case(std::string_view text);
Network read_case_file(const std::filesystem::path& path);

/// Writes the network back as case text that parse_case reads to an equal Network.
std::string serialize_case(const Network& network);

/// Nodal admittance Y = G + jB: diagonal holds the bus shunt, the series
/// admittances of incident in-service branches and their half line charging;
/// off-diagonal ij holds minus the series admittance between i and j.
Eigen::MatrixXcd build_admittance(const Network& network);

/// Ids of the buses sharing an in-service branch with bus_id.
std::vector<int> neighborhood(const Network& network, int bus_id);

}  // namespace gridsec
