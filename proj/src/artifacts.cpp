#include "dsse/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace dsse {

std::string format_double(double x) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) throw Error("cannot format number");
    return std::string(buf, end);
}

namespace {

double parse_double(const std::string& s, const std::string& ctx) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    while (e > b && (e[-1] == ' ' || e[-1] == '\r')) --e;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e) throw ParseError(ctx + ": '" + s + "' is not a number");
    return v;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && s[b] == ' ') ++b;
    return s.substr(b);
}

}  // namespace

nlohmann::json to_json(const PriorArtifact& a) {
    const StateEstimate& e = a.estimate;
    nlohmann::json j;
    j["format"] = "dsse-prior";
    j["version"] = kPriorArtifactVersion;
    j["network_hash"] = a.network_hash;
    j["sigma_pseudo"] = a.sigma_pseudo;
    j["representation"] = e.rep == Representation::complex ? "complex" : "rectangular";
    j["converged"] = e.converged;
    j["iterations"] = e.iterations;
    j["feasibility"] = e.feasibility;
    auto v = nlohmann::json::array();
    for (Index i = 0; i < e.v.size(); ++i) v.push_back({e.v(i).real(), e.v(i).imag()});
    j["v"] = std::move(v);
    auto lower = nlohmann::json::array();
    if (e.rep == Representation::complex) {
        for (Index r = 0; r < e.cov.rows(); ++r) {
            for (Index c = 0; c <= r; ++c) lower.push_back({e.cov(r, c).real(), e.cov(r, c).imag()});
        }
    } else {
        for (Index r = 0; r < e.cov_rect.rows(); ++r) {
            for (Index c = 0; c <= r; ++c) lower.push_back(e.cov_rect(r, c));
        }
    }
    j["cov_lower"] = std::move(lower);
    return j;
}

PriorArtifact parse_prior_artifact(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "dsse-prior") throw ParseError("not a prior artifact");
        const int version = j.at("version").get<int>();
        if (version != kPriorArtifactVersion) {
            throw ParseError("unsupported prior artifact version " + std::to_string(version));
        }
        PriorArtifact a;
        a.network_hash = j.at("network_hash").get<std::string>();
        a.sigma_pseudo = j.value("sigma_pseudo", 0.0);
        StateEstimate& e = a.estimate;
        const std::string rep = j.at("representation").get<std::string>();
        if (rep == "complex") {
            e.rep = Representation::complex;
        } else if (rep == "rectangular") {
            e.rep = Representation::rectangular;
        } else {
            throw ParseError("unknown representation '" + rep + "'");
        }
        e.converged = j.value("converged", true);
        e.iterations = j.value("iterations", 0);
        e.feasibility = j.value("feasibility", 0.0);
        const auto& v = j.at("v");
        const auto n = static_cast<Index>(v.size());
        e.v.resize(n);
        for (Index i = 0; i < n; ++i) {
            e.v(i) = cplx(v[static_cast<std::size_t>(i)].at(0).get<double>(), v[static_cast<std::size_t>(i)].at(1).get<double>());
        }
        const auto& lower = j.at("cov_lower");
        const Index dim = e.rep == Representation::complex ? n : 2 * n;
        if (static_cast<Index>(lower.size()) != dim * (dim + 1) / 2) {
            throw ParseError("cov_lower has " + std::to_string(lower.size()) + " entries, expected " +
                             std::to_string(dim * (dim + 1) / 2));
        }
        std::size_t k = 0;
        if (e.rep == Representation::complex) {
            e.cov.resize(n, n);
            for (Index r = 0; r < n; ++r) {
                for (Index c = 0; c <= r; ++c, ++k) {
                    const cplx x(lower[k].at(0).get<double>(), lower[k].at(1).get<double>());
                    e.cov(r, c) = x;
                    e.cov(c, r) = std::conj(x);
                }
            }
        } else {
            e.cov_rect.resize(dim, dim);
            for (Index r = 0; r < dim; ++r) {
                for (Index c = 0; c <= r; ++c, ++k) {
                    e.cov_rect(r, c) = e.cov_rect(c, r) = lower[k].get<double>();
                }
            }
        }
        return a;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("prior artifact: ") + ex.what());
    }
}

void save_prior_artifact(const PriorArtifact& a, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json(a).dump() << '\n';
    if (!out) throw Error("write failed: " + path.string());
}

PriorArtifact load_prior_artifact(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    return parse_prior_artifact(j);
}

void write_frames(std::ostream& out, const MeasurementPlan& plan,
                  const std::vector<MeasurementFrame>& frames, bool header) {
    if (header) out << "t,sensor_id,re,im\n";
    for (const MeasurementFrame& f : frames) {
        Index li = 0;
        Index mi = 0;
        for (std::size_t s = 0; s < plan.sensors.size(); ++s) {
            out << format_double(f.t) << ',' << s << ',';
            if (plan.sensors[s].synchronized) {
                const cplx z = f.linear(li++);
                out << format_double(z.real()) << ',' << format_double(z.imag()) << '\n';
            } else {
                out << format_double(f.magnitude(mi++)) << ",\n";
            }
        }
    }
}

std::vector<MeasurementFrame> read_frames(std::istream& in, const MeasurementPlan& plan) {
    // position of each sensor inside its block
    std::vector<Index> slot(plan.sensors.size());
    Index nl = 0;
    Index nm = 0;
    for (std::size_t s = 0; s < plan.sensors.size(); ++s) slot[s] = plan.sensors[s].synchronized ? nl++ : nm++;

    std::map<double, std::pair<MeasurementFrame, std::vector<bool>>> frames;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip(line);
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.rfind("t,", 0) == 0) continue;
        const auto cells = split(line);
        const std::string ctx = "frames line " + std::to_string(lineno);
        if (cells.size() < 3 || cells.size() > 4) throw ParseError(ctx + ": expected t,sensor_id,re,im");
        const double t = parse_double(cells[0], ctx);
        const double sid = parse_double(cells[1], ctx);
        if (sid < 0 || sid != static_cast<double>(static_cast<std::size_t>(sid)) ||
            static_cast<std::size_t>(sid) >= plan.sensors.size()) {
            throw ParseError(ctx + ": sensor_id " + cells[1] + " not in plan");
        }
        const auto s = static_cast<std::size_t>(sid);
        auto& [frame, seen] = frames[t];
        if (seen.empty()) {
            frame.t = t;
            frame.linear = CVector::Zero(nl);
            frame.magnitude = RVector::Zero(nm);
            seen.assign(plan.sensors.size(), false);
        }
        if (seen[s]) throw ParseError(ctx + ": duplicate reading for sensor " + cells[1]);
        seen[s] = true;
        const double re = parse_double(cells[2], ctx);
        const bool has_im = cells.size() == 4 && !strip(cells[3]).empty();
        if (plan.sensors[s].synchronized) {
            if (!has_im) throw ParseError(ctx + ": phasor sensor " + plan.sensors[s].label() + " needs im");
            frame.linear(slot[s]) = cplx(re, parse_double(cells[3], ctx));
        } else {
            if (has_im) throw ParseError(ctx + ": magnitude sensor " + plan.sensors[s].label() + " has im");
            if (re < 0) throw ParseError(ctx + ": negative magnitude");
            frame.magnitude(slot[s]) = re;
        }
    }
    std::vector<MeasurementFrame> out;
    for (auto& [t, entry] : frames) {
        for (std::size_t s = 0; s < plan.sensors.size(); ++s) {
            if (!entry.second[s]) {
                throw ParseError("frame t=" + format_double(t) + " lacks sensor " + std::to_string(s) + " (" +
                                 plan.sensors[s].label() + ")");
            }
        }
        out.push_back(std::move(entry.first));
    }
    return out;
}

std::vector<MeasurementFrame> read_frames(const std::filesystem::path& path, const MeasurementPlan& plan) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return read_frames(in, plan);
}

void write_estimate(std::ostream& out, double t, const PhaseIndexMap& index, const StateEstimate& est,
                    bool header) {
    if (header) out << "t,bus,phase,re_v,im_v,std_v\n";
    const RVector sd = est.std_dev();
    for (std::size_t i = 0; i < index.num_states(); ++i) {
        const auto& e = index.entry(i + 3);
        const auto k = static_cast<Index>(i);
        out << format_double(t) << ',' << e.bus << ',' << to_char(e.phase) << ',' << format_double(est.v(k).real())
            << ',' << format_double(est.v(k).imag()) << ',' << format_double(sd(k)) << '\n';
    }
}

CVector read_loads(const std::filesystem::path& path, const PhaseIndexMap& index) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    CVector s = CVector::Zero(static_cast<Index>(index.num_states()));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip(line);
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.rfind("bus,", 0) == 0) continue;
        const auto cells = split(line);
        const std::string ctx = path.filename().string() + ":" + std::to_string(lineno);
        if (cells.size() != 4) throw ParseError(ctx + ": expected bus,phase,p_pu,q_pu");
        const std::string ph = strip(cells[1]);
        if (ph.size() != 1) throw ParseError(ctx + ": bad phase '" + ph + "'");
        const auto k = static_cast<Index>(index.state_index(strip(cells[0]), parse_phase(ph[0])));
        s(k) = -cplx(parse_double(cells[2], ctx), parse_double(cells[3], ctx));
    }
    return s;
}

void write_loads(std::ostream& out, const PhaseIndexMap& index, const CVector& s) {
    out << "bus,phase,p_pu,q_pu\n";
    for (std::size_t i = 0; i < index.num_states(); ++i) {
        const cplx x = s(static_cast<Index>(i));
        if (x == cplx(0.0)) continue;
        const auto& e = index.entry(i + 3);
        out << e.bus << ',' << to_char(e.phase) << ',' << format_double(-x.real()) << ',' << format_double(-x.imag())
            << '\n';
    }
}

}  // namespace dsse
