#include "dsse/network.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_set>

namespace dsse {

using nlohmann::json;

char to_char(Phase p) { return static_cast<char>('a' + static_cast<int>(p)); }

Phase parse_phase(char c) {
    switch (c) {
    case 'a': case 'A': return Phase::a;
    case 'b': case 'B': return Phase::b;
    case 'c': case 'C': return Phase::c;
    default: throw ParseError(std::string("unknown phase '") + c + "'");
    }
}

PhaseSet PhaseSet::parse(const std::string& letters) {
    PhaseSet s;
    for (char ch : letters) {
        if (ch == 'n' || ch == 'N') continue;
        const Phase p = parse_phase(ch);
        if (s.contains(p)) throw ParseError("repeated phase in '" + letters + "'");
        s.insert(p);
    }
    return s;
}

std::size_t PhaseSet::size() const {
    return static_cast<std::size_t>((mask_ & 1U) + ((mask_ >> 1) & 1U) + ((mask_ >> 2) & 1U));
}

std::vector<Phase> PhaseSet::phases() const {
    std::vector<Phase> out;
    for (Phase p : {Phase::a, Phase::b, Phase::c}) {
        if (contains(p)) out.push_back(p);
    }
    return out;
}

std::size_t PhaseSet::position(Phase p) const {
    std::size_t pos = 0;
    for (Phase q : {Phase::a, Phase::b, Phase::c}) {
        if (q == p) return pos;
        if (contains(q)) ++pos;
    }
    return pos;
}

std::string PhaseSet::str() const {
    std::string s;
    for (Phase p : phases()) s.push_back(to_char(p));
    return s;
}

const Bus& NetworkModel::bus(const std::string& id) const {
    auto idx = find_bus(id);
    if (!idx) throw ValidationError("unknown bus '" + id + "'");
    return buses[*idx];
}

std::optional<std::size_t> NetworkModel::find_bus(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (buses[i].id == id) return i;
    }
    return std::nullopt;
}

namespace {

std::string line_name(const LineSpec& l) { return l.from + "->" + l.to; }

}  // namespace

void NetworkModel::validate() const {
    if (!(s_base_va > 0.0) || !(v_base_v > 0.0)) {
        throw ValidationError("s_base_va and v_base_v must be positive");
    }
    std::unordered_map<std::string, std::size_t> ids;
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const Bus& b = buses[i];
        if (!ids.emplace(b.id, i).second) throw ValidationError("duplicate bus '" + b.id + "'");
        if (b.phases.empty()) throw ValidationError("bus '" + b.id + "' has no phases");
        if (!b.zero_injection.subset_of(b.phases)) {
            throw ValidationError("bus '" + b.id + "' marks zero injection on an absent phase");
        }
        for (Phase p : {Phase::a, Phase::b, Phase::c}) {
            const cplx s = b.base_load[static_cast<int>(p)];
            if (s != cplx(0.0) && (!b.phases.contains(p) || b.zero_injection.contains(p))) {
                throw ValidationError("bus '" + b.id + "' has a load on phase " +
                                      std::string(1, to_char(p)) +
                                      " which is absent or zero-injection");
            }
        }
    }
    auto src = ids.find(source_bus);
    if (src == ids.end()) throw ValidationError("source bus '" + source_bus + "' missing");
    if (!(buses[src->second].phases == PhaseSet::all())) {
        throw ValidationError("source bus '" + source_bus + "' must carry phases abc");
    }

    std::vector<std::vector<std::size_t>> adj(buses.size());
    std::vector<PhaseSet> covered(buses.size());
    for (const LineSpec& l : lines) {
        auto f = ids.find(l.from);
        auto t = ids.find(l.to);
        if (f == ids.end() || t == ids.end()) {
            throw ValidationError("line " + line_name(l) + " references an unknown bus");
        }
        if (f->second == t->second) throw ValidationError("line " + line_name(l) + " is a self loop");
        if (l.phases.empty() || !l.phases.subset_of(buses[f->second].phases) ||
            !l.phases.subset_of(buses[t->second].phases)) {
            throw ValidationError("line " + line_name(l) + " phases '" + l.phases.str() +
                                  "' not present at both ends");
        }
        const auto p = static_cast<Index>(l.phases.size());
        if (l.z.rows() != p || l.z.cols() != p) {
            throw ValidationError("line " + line_name(l) + " impedance is not " +
                                  std::to_string(p) + "x" + std::to_string(p));
        }
        for (Index r = 0; r < p; ++r) {
            if (std::abs(l.z(r, r)) == 0.0) {
                throw ValidationError("line " + line_name(l) + " has a zero diagonal impedance");
            }
            for (Index c = r + 1; c < p; ++c) {
                const double scale = std::max(1.0, std::abs(l.z(r, c)));
                if (std::abs(l.z(r, c) - l.z(c, r)) > 1e-12 * scale) {
                    throw ValidationError("line " + line_name(l) + " impedance is not symmetric");
                }
            }
        }
        adj[f->second].push_back(t->second);
        adj[t->second].push_back(f->second);
        for (Phase ph : l.phases.phases()) {
            covered[f->second].insert(ph);
            covered[t->second].insert(ph);
        }
    }

    std::vector<bool> seen(buses.size(), false);
    std::queue<std::size_t> q;
    q.push(src->second);
    seen[src->second] = true;
    while (!q.empty()) {
        const std::size_t u = q.front();
        q.pop();
        for (std::size_t v : adj[u]) {
            if (!seen[v]) {
                seen[v] = true;
                q.push(v);
            }
        }
    }
    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (!seen[i]) throw ValidationError("bus '" + buses[i].id + "' is disconnected from the source");
        if (i != src->second && !buses[i].phases.subset_of(covered[i])) {
            throw ValidationError("bus '" + buses[i].id + "' has a phase with no incident line");
        }
    }
}

namespace {

cplx parse_cplx(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ParseError(what + ": expected [re, im]");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

json cplx_json(cplx z) { return json::array({z.real(), z.imag()}); }

template <typename T>
T require(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw ParseError(ctx + ": missing \"" + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(ctx + ": bad \"" + key + "\": " + e.what());
    }
}

std::string id_string(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key)) throw ParseError(ctx + ": missing \"" + key + "\"");
    const json& v = j.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw ParseError(ctx + ": \"" + key + "\" must be a string or integer");
}

}  // namespace

NetworkModel parse_network(const json& j) {
    if (!j.is_object()) throw ParseError("network: top level must be an object");
    NetworkModel net;
    net.s_base_va = require<double>(j, "s_base_va", "network");
    net.v_base_v = require<double>(j, "v_base_v", "network");
    const json& src = j.contains("source") ? j.at("source") : throw ParseError("network: missing \"source\"");
    net.source_bus = id_string(src, "bus", "source");
    if (src.contains("v_pu")) {
        const json& v = src.at("v_pu");
        if (!v.is_array() || v.size() != 3) throw ParseError("source.v_pu: expected 3 entries");
        for (int k = 0; k < 3; ++k) net.v_source[k] = parse_cplx(v[k], "source.v_pu");
    }
    if (!j.contains("buses") || !j.at("buses").is_array()) throw ParseError("network: missing \"buses\" array");
    for (const json& jb : j.at("buses")) {
        Bus b;
        b.id = id_string(jb, "id", "bus");
        const std::string ctx = "bus '" + b.id + "'";
        b.phases = PhaseSet::parse(require<std::string>(jb, "phases", ctx));
        const auto present = b.phases.phases();
        if (jb.contains("zero_injection")) {
            const json& zi = jb.at("zero_injection");
            if (zi.is_boolean()) {
                if (zi.get<bool>()) b.zero_injection = b.phases;
            } else if (zi.is_array() && zi.size() == present.size()) {
                for (std::size_t k = 0; k < present.size(); ++k) {
                    if (!zi[k].is_boolean()) throw ParseError(ctx + ": zero_injection entries must be bool");
                    if (zi[k].get<bool>()) b.zero_injection.insert(present[k]);
                }
            } else {
                throw ParseError(ctx + ": zero_injection must be a bool or one bool per phase");
            }
        }
        if (jb.contains("base_load_pu")) {
            const json& bl = jb.at("base_load_pu");
            if (!bl.is_array() || bl.size() != present.size()) {
                throw ParseError(ctx + ": base_load_pu must have one [re, im] per phase");
            }
            for (std::size_t k = 0; k < present.size(); ++k) {
                b.base_load[static_cast<int>(present[k])] = parse_cplx(bl[k], ctx + " base_load_pu");
            }
        }
        net.buses.push_back(std::move(b));
    }
    if (!j.contains("lines") || !j.at("lines").is_array()) throw ParseError("network: missing \"lines\" array");
    for (const json& jl : j.at("lines")) {
        LineSpec l;
        l.from = id_string(jl, "from", "line");
        l.to = id_string(jl, "to", "line");
        const std::string ctx = "line " + l.from + "->" + l.to;
        l.phases = PhaseSet::parse(require<std::string>(jl, "phases", ctx));
        const json& z = jl.contains("z_pu") ? jl.at("z_pu") : throw ParseError(ctx + ": missing \"z_pu\"");
        const auto p = static_cast<Index>(l.phases.size());
        if (!z.is_array() || static_cast<Index>(z.size()) != p) {
            throw ParseError(ctx + ": z_pu must be " + std::to_string(p) + " rows");
        }
        l.z.resize(p, p);
        for (Index r = 0; r < p; ++r) {
            if (!z[r].is_array() || static_cast<Index>(z[r].size()) != p) {
                throw ParseError(ctx + ": z_pu row " + std::to_string(r) + " has wrong length");
            }
            for (Index c = 0; c < p; ++c) l.z(r, c) = parse_cplx(z[r][c], ctx + " z_pu");
        }
        net.lines.push_back(std::move(l));
    }
    net.validate();
    return net;
}

json to_json(const NetworkModel& net) {
    json j;
    j["s_base_va"] = net.s_base_va;
    j["v_base_v"] = net.v_base_v;
    j["source"] = {{"bus", net.source_bus},
                   {"v_pu", json::array({cplx_json(net.v_source[0]), cplx_json(net.v_source[1]),
                                         cplx_json(net.v_source[2])})}};
    json buses = json::array();
    for (const Bus& b : net.buses) {
        json jb = {{"id", b.id}, {"phases", b.phases.str()}};
        json zi = json::array();
        json bl = json::array();
        bool any_load = false;
        for (Phase p : b.phases.phases()) {
            zi.push_back(b.zero_injection.contains(p));
            const cplx s = b.base_load[static_cast<int>(p)];
            bl.push_back(cplx_json(s));
            any_load = any_load || s != cplx(0.0);
        }
        jb["zero_injection"] = zi;
        if (any_load) jb["base_load_pu"] = bl;
        buses.push_back(std::move(jb));
    }
    j["buses"] = std::move(buses);
    json lines = json::array();
    for (const LineSpec& l : net.lines) {
        json z = json::array();
        for (Index r = 0; r < l.z.rows(); ++r) {
            json row = json::array();
            for (Index c = 0; c < l.z.cols(); ++c) row.push_back(cplx_json(l.z(r, c)));
            z.push_back(std::move(row));
        }
        lines.push_back({{"from", l.from}, {"to", l.to}, {"phases", l.phases.str()}, {"z_pu", z}});
    }
    j["lines"] = std::move(lines);
    return j;
}

NetworkModel load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open network file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return parse_network(j);
}

void save_network(const NetworkModel& net, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write network file " + path.string());
    out << to_json(net).dump(1) << '\n';
}

std::string network_hash(const NetworkModel& net) {
    const std::string text = to_json(net).dump();
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PhaseIndexMap::PhaseIndexMap(const NetworkModel& net) {
    for (Phase p : {Phase::a, Phase::b, Phase::c}) entries_.push_back({net.source_bus, p});
    lookup_[net.source_bus] = {0, 1, 2};
    for (const Bus& b : net.buses) {
        if (b.id == net.source_bus) continue;
        std::array<int, 3> slots{-1, -1, -1};
        for (Phase p : b.phases.phases()) {
            slots[static_cast<int>(p)] = static_cast<int>(entries_.size());
            if (b.zero_injection.contains(p)) eps_.push_back(entries_.size() - 3);
            entries_.push_back({b.id, p});
        }
        lookup_[b.id] = slots;
    }
}

std::optional<std::size_t> PhaseIndexMap::flat_index(const std::string& bus, Phase p) const {
    auto it = lookup_.find(bus);
    if (it == lookup_.end()) return std::nullopt;
    const int idx = it->second[static_cast<int>(p)];
    if (idx < 0) return std::nullopt;
    return static_cast<std::size_t>(idx);
}

std::size_t PhaseIndexMap::state_index(const std::string& bus, Phase p) const {
    auto flat = flat_index(bus, p);
    if (!flat) {
        throw ValidationError("bus '" + bus + "' has no phase " + std::string(1, to_char(p)));
    }
    if (is_source(*flat)) throw ValidationError("bus '" + bus + "' is the source, not a state");
    return *flat - 3;
}

CVector AdmittanceBlocks::solve_yd(const CVector& rhs) const {
    if (rhs.size() != yd_.rows()) throw DimensionError("solve_yd: dimension mismatch");
    return yd_lu_.solve(rhs);
}

CMatrix AdmittanceBlocks::solve_yd(const CMatrix& rhs) const {
    if (rhs.rows() != yd_.rows()) throw DimensionError("solve_yd: dimension mismatch");
    return yd_lu_.solve(rhs);
}

AdmittanceBlocks build_admittance(const NetworkModel& net) {
    AdmittanceBlocks adm;
    adm.index_ = PhaseIndexMap(net);
    const auto n = static_cast<Index>(adm.index_.size());
    adm.y_ = CMatrix::Zero(n, n);
    for (const LineSpec& l : net.lines) {
        CMatrix a = l.z.inverse();
        a = (0.5 * (a + a.transpose())).eval();
        const auto phases = l.phases.phases();
        std::vector<Index> fi, ti;
        for (Phase p : phases) {
            fi.push_back(static_cast<Index>(*adm.index_.flat_index(l.from, p)));
            ti.push_back(static_cast<Index>(*adm.index_.flat_index(l.to, p)));
        }
        for (std::size_t r = 0; r < phases.size(); ++r) {
            for (std::size_t c = 0; c < phases.size(); ++c) {
                const cplx y = a(static_cast<Index>(r), static_cast<Index>(c));
                adm.y_(fi[r], fi[c]) += y;
                adm.y_(ti[r], ti[c]) += y;
                adm.y_(fi[r], ti[c]) -= y;
                adm.y_(ti[r], fi[c]) -= y;
            }
        }
    }
    const Index m = n - 3;
    adm.ya_ = adm.y_.topLeftCorner(3, 3);
    adm.yb_ = adm.y_.topRightCorner(3, m);
    adm.yc_ = adm.y_.bottomLeftCorner(m, 3);
    adm.yd_ = adm.y_.bottomRightCorner(m, m);
    adm.yd_lu_.compute(adm.yd_);
    if (m == 0 || !(adm.yd_lu_.rcond() > 1e-14)) {
        throw NumericalError("Y_d is singular (rcond " + std::to_string(m ? adm.yd_lu_.rcond() : 0.0) +
                             "): the network is degenerate");
    }
    return adm;
}

CVector source_vector(const NetworkModel& net) {
    CVector v(3);
    for (int k = 0; k < 3; ++k) v[k] = net.v_source[k];
    return v;
}

CVector no_load_voltage(const AdmittanceBlocks& adm, const CVector& v_source) {
    if (v_source.size() != 3) throw DimensionError("no_load_voltage: source vector must have 3 entries");
    CVector v0 = adm.solve_yd(CVector(-(adm.yc() * v_source)));
    if (!v0.allFinite()) throw NumericalError("no_load_voltage: solve produced non-finite values");
    return v0;
}

Injections compute_injections(const AdmittanceBlocks& adm, const CVector& v_source, const CVector& v) {
    if (v.size() != adm.num_states() || v_source.size() != 3) {
        throw DimensionError("compute_injections: expected " + std::to_string(adm.num_states()) +
                             " states, got " + std::to_string(v.size()));
    }
    Injections out;
    out.current = adm.yc() * v_source + adm.yd() * v;
    out.power = out.current.conjugate().cwiseProduct(v);
    return out;
}

CVector base_injections(const NetworkModel& net, const PhaseIndexMap& index) {
    CVector s = CVector::Zero(static_cast<Index>(index.num_states()));
    for (const Bus& b : net.buses) {
        if (b.id == net.source_bus) continue;
        for (Phase p : b.phases.phases()) {
            s[static_cast<Index>(index.state_index(b.id, p))] = b.base_load[static_cast<int>(p)];
        }
    }
    return s;
}

}  // namespace dsse
