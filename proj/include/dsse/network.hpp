#pragma once

#include <array>
#include <numbers>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dsse/types.hpp"

namespace dsse {

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

char to_char(Phase p);
Phase parse_phase(char c);

// Subset of {a, b, c}, iterated in a-b-c order.
class PhaseSet {
public:
    constexpr PhaseSet() = default;
    static PhaseSet parse(const std::string& letters);
    static constexpr PhaseSet all() { return PhaseSet(0b111); }

    bool contains(Phase p) const { return (mask_ >> static_cast<int>(p)) & 1U; }
    void insert(Phase p) { mask_ |= static_cast<std::uint8_t>(1U << static_cast<int>(p)); }
    std::size_t size() const;
    bool empty() const { return mask_ == 0; }
    bool subset_of(PhaseSet other) const { return (mask_ & ~other.mask_) == 0; }
    PhaseSet intersect(PhaseSet other) const { return PhaseSet(mask_ & other.mask_); }
    std::vector<Phase> phases() const;
    // Position of p among the present phases; p must be present.
    std::size_t position(Phase p) const;
    std::string str() const;

    friend bool operator==(PhaseSet, PhaseSet) = default;

private:
    constexpr explicit PhaseSet(std::uint8_t mask) : mask_(mask) {}
    std::uint8_t mask_ = 0;
};

struct Bus {
    std::string id;
    PhaseSet phases;
    PhaseSet zero_injection;
    // Base complex power injection per phase (a, b, c), p.u.; loads are negative.
    std::array<cplx, 3> base_load{};
};

struct LineSpec {
    std::string from;
    std::string to;
    PhaseSet phases;
    // P x P series impedance in p.u., rows/columns in a-b-c order of `phases`.
    CMatrix z;
};

struct NetworkModel {
    double s_base_va = 1.0;
    double v_base_v = 1.0;
    std::string source_bus;
    std::array<cplx, 3> v_source{cplx(1.0, 0.0), std::polar(1.0, -2.0 * std::numbers::pi / 3.0),
                                 std::polar(1.0, 2.0 * std::numbers::pi / 3.0)};
    std::vector<Bus> buses;
    std::vector<LineSpec> lines;

    const Bus& bus(const std::string& id) const;
    std::optional<std::size_t> find_bus(const std::string& id) const;

    // Throws ValidationError naming the offending entity.
    void validate() const;
};

NetworkModel parse_network(const nlohmann::json& j);
nlohmann::json to_json(const NetworkModel& net);
NetworkModel load_network(const std::filesystem::path& path);
void save_network(const NetworkModel& net, const std::filesystem::path& path);
// FNV-1a over the canonical JSON dump; identifies the network in prior artifacts.
std::string network_hash(const NetworkModel& net);

// Flat (bus, phase) indexing. Source phases take indices 0..2; the N state
// entries follow in bus order, phases a-b-c within a bus.
class PhaseIndexMap {
public:
    struct Entry {
        std::string bus;
        Phase phase;
    };

    PhaseIndexMap() = default;
    explicit PhaseIndexMap(const NetworkModel& net);

    std::size_t num_states() const { return entries_.size() - 3; }
    std::size_t size() const { return entries_.size(); }
    const Entry& entry(std::size_t flat) const { return entries_.at(flat); }
    std::optional<std::size_t> flat_index(const std::string& bus, Phase p) const;
    bool is_source(std::size_t flat) const { return flat < 3; }
    // State index (flat - 3); throws ValidationError for source or absent phases.
    std::size_t state_index(const std::string& bus, Phase p) const;
    // Zero-injection state indices, ascending.
    const std::vector<std::size_t>& zero_injection() const { return eps_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::array<int, 3>> lookup_;
    std::vector<std::size_t> eps_;
};

// Y and its source / non-source partition. Immutable; Y_d factorization is cached.
class AdmittanceBlocks {
public:
    const CMatrix& y() const { return y_; }
    const CMatrix& ya() const { return ya_; }
    const CMatrix& yb() const { return yb_; }
    const CMatrix& yc() const { return yc_; }
    const CMatrix& yd() const { return yd_; }
    const PhaseIndexMap& index() const { return index_; }
    Index num_states() const { return yd_.rows(); }

    CVector solve_yd(const CVector& rhs) const;
    CMatrix solve_yd(const CMatrix& rhs) const;

private:
    friend AdmittanceBlocks build_admittance(const NetworkModel& net);

    CMatrix y_, ya_, yb_, yc_, yd_;
    PhaseIndexMap index_;
    Eigen::PartialPivLU<CMatrix> yd_lu_;
};

AdmittanceBlocks build_admittance(const NetworkModel& net);

CVector source_vector(const NetworkModel& net);

// V0 = -Y_d^{-1} Y_c V_source
CVector no_load_voltage(const AdmittanceBlocks& adm, const CVector& v_source);

struct Injections {
    CVector current;
    CVector power;
};

// I = Y_c V_source + Y_d v,  S = diag(conj I) v
Injections compute_injections(const AdmittanceBlocks& adm, const CVector& v_source,
                              const CVector& v);

// Base loads flattened to the state ordering.
CVector base_injections(const NetworkModel& net, const PhaseIndexMap& index);

}  // namespace dsse
