#include "dsse/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dsse {

namespace {

using Row = std::vector<std::string>;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<Row> read_table(const std::filesystem::path& path, std::size_t min_cols, bool required = true) {
    std::ifstream in(path);
    if (!in) {
        if (!required) return {};
        throw ParseError("cannot open feeder table " + path.string());
    }
    std::vector<Row> rows;
    std::string line;
    bool header = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        Row row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(trim(cell));
        if (row.size() < min_cols) {
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(min_cols) + " columns");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

double number(const std::string& s, const std::string& ctx) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(ctx + ": '" + s + "' is not a number");
    }
}

struct Config {
    PhaseSet phases;
    Eigen::Matrix3cd z;  // ohm/mile, full abc
};

CMatrix restrict(const Eigen::Matrix3cd& z, PhaseSet phases) {
    const auto ps = phases.phases();
    const auto p = static_cast<Index>(ps.size());
    CMatrix out(p, p);
    for (Index r = 0; r < p; ++r) {
        for (Index c = 0; c < p; ++c) {
            out(r, c) = z(static_cast<int>(ps[static_cast<std::size_t>(r)]), static_cast<int>(ps[static_cast<std::size_t>(c)]));
        }
    }
    return out;
}

bool numeric_less(const std::string& a, const std::string& b) {
    const bool na = !a.empty() && std::all_of(a.begin(), a.end(), ::isdigit);
    const bool nb = !b.empty() && std::all_of(b.begin(), b.end(), ::isdigit);
    if (na && nb) return std::stoll(a) < std::stoll(b);
    if (na != nb) return na;
    return a < b;
}

}  // namespace

NetworkModel convert_feeder(const std::filesystem::path& dir, const FeederOptions& opts) {
    const auto sub = read_table(dir / "substation.csv", 3);
    if (sub.size() != 1) throw ParseError("substation.csv must hold exactly one row");
    const std::string source = sub[0][0];
    const double s_base = number(sub[0][1], "substation kva") * 1e3;
    const double v_ll = number(sub[0][2], "substation kv_ll") * 1e3;
    const double z_base = v_ll * v_ll / s_base;
    const double s_phase_base = s_base / 3.0;

    std::map<std::string, Config> configs;
    for (const Row& r : read_table(dir / "line_config.csv", 14)) {
        Config cfg;
        cfg.phases = PhaseSet::parse(r[1]);
        auto at = [&](std::size_t k) { return cplx(number(r[k], "config " + r[0]), number(r[k + 1], "config " + r[0])); };
        const cplx aa = at(2), ab = at(4), ac = at(6), bb = at(8), bc = at(10), cc = at(12);
        cfg.z << aa, ab, ac, ab, bb, bc, ac, bc, cc;
        configs[r[0]] = cfg;
    }

    NetworkModel net;
    net.s_base_va = s_base;
    net.v_base_v = v_ll / std::sqrt(3.0);
    net.source_bus = source;

    std::map<std::string, PhaseSet> phases;
    phases[source] = PhaseSet::all();
    for (const Row& r : read_table(dir / "line_data.csv", 4)) {
        auto it = configs.find(r[3]);
        if (it == configs.end()) throw ParseError("line " + r[0] + "-" + r[1] + ": unknown config " + r[3]);
        const double miles = number(r[2], "line length") / 5280.0;
        LineSpec l;
        l.from = r[0];
        l.to = r[1];
        l.phases = it->second.phases;
        l.z = restrict(it->second.z, l.phases) * (miles / z_base);
        for (const std::string& b : {l.from, l.to}) {
            for (Phase p : l.phases.phases()) phases[b].insert(p);
        }
        net.lines.push_back(std::move(l));
    }
    for (const Row& r : read_table(dir / "switch_data.csv", 3, false)) {
        if (r[2] != "closed") continue;
        auto a = phases.find(r[0]);
        auto b = phases.find(r[1]);
        if (a == phases.end() || b == phases.end()) continue;  // leads to a dropped lateral
        LineSpec l;
        l.from = r[0];
        l.to = r[1];
        l.phases = a->second.intersect(b->second);
        const auto p = static_cast<Index>(l.phases.size());
        l.z = CMatrix::Identity(p, p) * opts.switch_impedance_pu;
        net.lines.push_back(std::move(l));
    }

    // keep only what the source reaches
    std::set<std::string> reached{source};
    for (bool grew = true; grew;) {
        grew = false;
        for (const LineSpec& l : net.lines) {
            const bool f = reached.count(l.from) > 0;
            const bool t = reached.count(l.to) > 0;
            if (f != t) {
                reached.insert(f ? l.to : l.from);
                grew = true;
            }
        }
    }
    std::erase_if(net.lines, [&](const LineSpec& l) { return !reached.count(l.from) || !reached.count(l.to); });

    std::vector<std::string> ids(reached.begin(), reached.end());
    std::sort(ids.begin(), ids.end(), numeric_less);
    std::stable_partition(ids.begin(), ids.end(), [&](const std::string& id) { return id == source; });
    for (const std::string& id : ids) {
        Bus b;
        b.id = id;
        b.phases = phases[id];
        net.buses.push_back(b);
    }

    for (const Row& r : read_table(dir / "spot_loads.csv", 8)) {
        auto idx = net.find_bus(r[0]);
        if (!idx) throw ValidationError("spot load at bus " + r[0] + " which is not in the energized feeder");
        Bus& b = net.buses[*idx];
        for (int k = 0; k < 3; ++k) {
            const double p = number(r[2 + 2 * k], "load p");
            const double q = number(r[3 + 2 * k], "load q");
            if (p == 0.0 && q == 0.0) continue;
            const auto ph = static_cast<Phase>(k);
            if (!b.phases.contains(ph)) {
                throw ValidationError("spot load at bus " + r[0] + " on absent phase " + std::string(1, to_char(ph)));
            }
            b.base_load[k] = -cplx(p, q) * 1e3 / s_phase_base;
        }
    }
    for (Bus& b : net.buses) {
        if (b.id == source) continue;
        for (Phase p : b.phases.phases()) {
            if (b.base_load[static_cast<int>(p)] == cplx(0.0)) b.zero_injection.insert(p);
        }
    }
    net.validate();
    return net;
}

}  // namespace dsse
