#include "dsse/measurement.hpp"

#include <algorithm>
#include <fstream>

#include "dsse/rng.hpp"

namespace dsse {

using nlohmann::json;

namespace {

const char* kind_name(SensorKind k) {
    switch (k) {
    case SensorKind::voltage: return "voltage";
    case SensorKind::current: return "current";
    case SensorKind::branch: return "branch";
    }
    return "?";
}

SensorKind parse_kind(const std::string& s) {
    if (s == "voltage") return SensorKind::voltage;
    if (s == "current") return SensorKind::current;
    if (s == "branch") return SensorKind::branch;
    throw ParseError("unknown sensor kind '" + s + "'");
}

bool lines_share_phase(const NetworkModel& net, const std::string& a, const std::string& b, Phase p) {
    return std::any_of(net.lines.begin(), net.lines.end(), [&](const LineSpec& l) {
        return ((l.from == a && l.to == b) || (l.from == b && l.to == a)) && l.phases.contains(p);
    });
}

}  // namespace

std::string SensorSpec::label() const {
    std::string s = std::string(kind_name(kind)) + "@" + bus;
    if (kind == SensorKind::branch) s += "->" + to_bus;
    s += "." + std::string(1, to_char(phase));
    if (!synchronized) s += "|mag";
    return s;
}

std::vector<SensorSpec> MeasurementPlan::synchronized() const {
    std::vector<SensorSpec> out;
    std::copy_if(sensors.begin(), sensors.end(), std::back_inserter(out),
                 [](const SensorSpec& s) { return s.synchronized; });
    return out;
}

std::vector<SensorSpec> MeasurementPlan::magnitude_only() const {
    std::vector<SensorSpec> out;
    std::copy_if(sensors.begin(), sensors.end(), std::back_inserter(out),
                 [](const SensorSpec& s) { return !s.synchronized; });
    return out;
}

std::size_t MeasurementPlan::num_linear() const {
    return static_cast<std::size_t>(
        std::count_if(sensors.begin(), sensors.end(), [](const SensorSpec& s) { return s.synchronized; }));
}

std::size_t MeasurementPlan::num_nonlinear() const { return sensors.size() - num_linear(); }

void validate_plan(const MeasurementPlan& plan, const NetworkModel& net) {
    if (!(plan.sigma_meas >= 0.0)) throw ValidationError("plan: sigma_meas must be non-negative");
    for (const SensorSpec& s : plan.sensors) {
        auto b = net.find_bus(s.bus);
        if (!b || !net.buses[*b].phases.contains(s.phase)) {
            throw ValidationError("sensor " + s.label() + ": location does not exist");
        }
        if (s.kind == SensorKind::branch) {
            auto m = net.find_bus(s.to_bus);
            if (!m || !net.buses[*m].phases.contains(s.phase) ||
                !lines_share_phase(net, s.bus, s.to_bus, s.phase)) {
                throw ValidationError("sensor " + s.label() + ": target is not an adjacent bus sharing the phase");
            }
        }
    }
}

MeasurementPlan parse_plan(const json& j, const NetworkModel& net) {
    MeasurementPlan plan;
    const json* list = &j;
    if (j.is_object()) {
        if (j.contains("sigma_meas")) plan.sigma_meas = j.at("sigma_meas").get<double>();
        if (!j.contains("sensors")) throw ParseError("plan: missing \"sensors\"");
        list = &j.at("sensors");
    }
    if (!list->is_array()) throw ParseError("plan: sensors must be an array");
    auto id_of = [](const json& v) {
        return v.is_string() ? v.get<std::string>() : std::to_string(v.get<long long>());
    };
    for (const json& js : *list) {
        try {
            SensorSpec base;
            base.kind = parse_kind(js.at("kind").get<std::string>());
            base.bus = id_of(js.at("bus"));
            if (js.contains("to_bus")) base.to_bus = id_of(js.at("to_bus"));
            if (base.kind == SensorKind::branch && base.to_bus.empty()) {
                throw ParseError("branch sensor at bus " + base.bus + " needs \"to_bus\"");
            }
            base.synchronized = js.value("sync", true);
            PhaseSet phases;
            if (js.contains("phase")) {
                phases = PhaseSet::parse(js.at("phase").get<std::string>());
            } else {
                phases = net.bus(base.bus).phases;
                if (base.kind == SensorKind::branch) phases = phases.intersect(net.bus(base.to_bus).phases);
            }
            for (Phase p : phases.phases()) {
                SensorSpec s = base;
                s.phase = p;
                plan.sensors.push_back(s);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("plan: malformed sensor entry: ") + e.what());
        }
    }
    validate_plan(plan, net);
    return plan;
}

MeasurementPlan load_plan(const std::filesystem::path& path, const NetworkModel& net) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open plan file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    return parse_plan(j, net);
}

json to_json(const MeasurementPlan& plan) {
    json sensors = json::array();
    for (const SensorSpec& s : plan.sensors) {
        json js = {{"kind", kind_name(s.kind)}, {"bus", s.bus},
                   {"phase", std::string(1, to_char(s.phase))}, {"sync", s.synchronized}};
        if (s.kind == SensorKind::branch) js["to_bus"] = s.to_bus;
        sensors.push_back(std::move(js));
    }
    return {{"sigma_meas", plan.sigma_meas}, {"sensors", sensors}};
}

AffineMap sensor_map(std::span<const SensorSpec> sensors, const AdmittanceBlocks& adm,
                     const CVector& v_source) {
    const PhaseIndexMap& idx = adm.index();
    const auto m = static_cast<Index>(sensors.size());
    AffineMap map;
    map.c = CMatrix::Zero(m, adm.num_states());
    map.d = CVector::Zero(m);
    auto flat = [&](const std::string& bus, Phase p, const SensorSpec& s) {
        auto f = idx.flat_index(bus, p);
        if (!f) throw ValidationError("sensor " + s.label() + ": missing phase at bus " + bus);
        return static_cast<Index>(*f);
    };
    for (Index r = 0; r < m; ++r) {
        const SensorSpec& s = sensors[static_cast<std::size_t>(r)];
        map.labels.push_back(s.label());
        auto add = [&](Index col, cplx coeff) {
            if (col < 3) {
                map.d[r] += coeff * v_source[col];
            } else {
                map.c(r, col - 3) += coeff;
            }
        };
        const Index i = flat(s.bus, s.phase, s);
        switch (s.kind) {
        case SensorKind::voltage:
            add(i, 1.0);
            break;
        case SensorKind::current:
            for (Index col = 0; col < adm.y().cols(); ++col) {
                if (adm.y()(i, col) != cplx(0.0)) add(col, adm.y()(i, col));
            }
            break;
        case SensorKind::branch: {
            const Index k = flat(s.to_bus, s.phase, s);
            const cplx y = adm.y()(i, k);
            add(i, -y);
            add(k, y);
            break;
        }
        }
    }
    return map;
}

AffineMap build_linear_map(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                           const CVector& v_source) {
    const auto sensors = plan.synchronized();
    return sensor_map(sensors, adm, v_source);
}

AffineMap build_magnitude_map(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                              const CVector& v_source) {
    const auto sensors = plan.magnitude_only();
    return sensor_map(sensors, adm, v_source);
}

RVector eval_nonlinear(const AffineMap& magnitude_map, const CVector& v) {
    return magnitude_map.evaluate(v).cwiseAbs();
}

RVector eval_nonlinear(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                       const CVector& v_source, const CVector& v) {
    return eval_nonlinear(build_magnitude_map(plan, adm, v_source), v);
}

RMatrix nonlinear_jacobian(const AffineMap& magnitude_map, const RVector& v_rect, ZeroMagnitude at_zero) {
    const CVector v = unstack_rect(v_rect);
    if (v.size() != magnitude_map.c.cols()) throw DimensionError("nonlinear_jacobian: dimension mismatch");
    const CVector w = magnitude_map.evaluate(v);
    const Index n = v.size();
    RMatrix jac(w.size(), 2 * n);
    for (Index r = 0; r < w.size(); ++r) {
        const double mag = std::abs(w[r]);
        if (mag < kMinMagnitude) {
            if (at_zero == ZeroMagnitude::zero_row) {
                jac.row(r).setZero();
                continue;
            }
            const std::string who = r < static_cast<Index>(magnitude_map.labels.size())
                                        ? magnitude_map.labels[static_cast<std::size_t>(r)]
                                        : "#" + std::to_string(r);
            throw NumericalError("sensor " + who + ": measured quantity is ~0, magnitude gradient is singular");
        }
        const double wr = w[r].real() / mag;
        const double wi = w[r].imag() / mag;
        const auto c = magnitude_map.c.row(r);
        jac.row(r).head(n) = wr * c.real() + wi * c.imag();
        jac.row(r).tail(n) = wi * c.real() - wr * c.imag();
    }
    return jac;
}

RMatrix nonlinear_jacobian(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                           const CVector& v_source, const RVector& v_rect) {
    return nonlinear_jacobian(build_magnitude_map(plan, adm, v_source), v_rect);
}

MeasurementCovariances measurement_covariances(double sigma_meas, const CVector& linear_ref,
                                               const RVector& magnitude_ref,
                                               const CovarianceOptions& opts) {
    const double s2 = sigma_meas * sigma_meas;
    const Index m = linear_ref.size();
    MeasurementCovariances cov;
    auto floored = [&](double v) {
        if (v < opts.floor) {
            ++cov.floored;
            return opts.floor;
        }
        return v;
    };
    cov.linear.resize(m);
    cov.rect_linear = RMatrix::Zero(2 * m, 2 * m);
    for (Index k = 0; k < m; ++k) {
        const cplx z = linear_ref[k];
        cov.linear[k] = floored(2.0 * s2 * std::norm(z));
        const double diag = floored(s2 * std::norm(z));
        double off = opts.rect_form == RectCovarianceForm::coupled ? 2.0 * s2 * z.real() * z.imag() : 0.0;
        // keep each 2x2 block positive definite: eigenvalues diag -/+ |off|
        if (diag - std::abs(off) < opts.floor) off = std::copysign(std::max(0.0, diag - opts.floor), off);
        cov.rect_linear(k, k) = diag;
        cov.rect_linear(m + k, m + k) = diag;
        cov.rect_linear(k, m + k) = off;
        cov.rect_linear(m + k, k) = off;
    }
    cov.magnitude.resize(magnitude_ref.size());
    for (Index k = 0; k < magnitude_ref.size(); ++k) {
        cov.magnitude[k] = floored(s2 * magnitude_ref[k] * magnitude_ref[k]);
    }
    return cov;
}

MeasurementCovariances measurement_covariances(const MeasurementPlan& plan, const MeasurementFrame& frame,
                                               const CovarianceOptions& opts) {
    if (static_cast<std::size_t>(frame.linear.size()) != plan.num_linear() ||
        static_cast<std::size_t>(frame.magnitude.size()) != plan.num_nonlinear()) {
        throw DimensionError("measurement_covariances: frame does not match plan");
    }
    return measurement_covariances(plan.sigma_meas, frame.linear, frame.magnitude, opts);
}

MeasurementFrame simulate_frame(const MeasurementPlan& plan, const AffineMap& linear_map,
                                const AffineMap& magnitude_map, const CVector& v_true,
                                std::uint64_t seed, NoiseModel model, double t) {
    if (linear_map.rows() != static_cast<Index>(plan.num_linear()) ||
        magnitude_map.rows() != static_cast<Index>(plan.num_nonlinear())) {
        throw DimensionError("simulate_frame: maps do not match the plan");
    }
    MeasurementFrame frame;
    frame.t = t;
    const CVector u_lin = linear_map.evaluate(v_true);
    const CVector u_mag = magnitude_map.evaluate(v_true);
    frame.linear.resize(u_lin.size());
    frame.magnitude.resize(u_mag.size());
    // one stream per sensor, keyed by its position in the full plan
    Index li = 0;
    Index mi = 0;
    for (std::size_t k = 0; k < plan.sensors.size(); ++k) {
        auto gen = make_stream(seed, {k});
        if (plan.sensors[k].synchronized) {
            frame.linear[li] = noisy_phasor(u_lin[li], plan.sigma_meas, model, gen);
            ++li;
        } else {
            std::normal_distribution<double> normal(0.0, 1.0);
            const double z = std::abs(u_mag[mi]) * (1.0 + plan.sigma_meas * normal(gen));
            frame.magnitude[mi] = std::max(0.0, z);
            ++mi;
        }
    }
    if (li != u_lin.size() || mi != u_mag.size()) {
        throw DimensionError("simulate_frame: maps do not match the plan");
    }
    return frame;
}

MeasurementFrame simulate_frame(const MeasurementPlan& plan, const CVector& v_true,
                                const AdmittanceBlocks& adm, const CVector& v_source,
                                std::uint64_t seed, NoiseModel model) {
    return simulate_frame(plan, build_linear_map(plan, adm, v_source),
                          build_magnitude_map(plan, adm, v_source), v_true, seed, model);
}

RVector PseudoMeasurements::variance() const { return sigma * sigma * s.cwiseAbs2(); }

RVector PseudoMeasurements::rect_variance() const {
    RVector out(2 * s.size());
    out.head(s.size()) = sigma * sigma * s.real().cwiseAbs2();
    out.tail(s.size()) = sigma * sigma * s.imag().cwiseAbs2();
    return out;
}

PseudoMeasurements sample_pseudo(const CVector& s_true, double sigma, std::uint64_t seed) {
    PseudoMeasurements p;
    p.sigma = sigma;
    p.s.resize(s_true.size());
    for (Index k = 0; k < s_true.size(); ++k) {
        std::normal_distribution<double> normal(0.0, 1.0);
        auto gen = make_stream(seed, {static_cast<std::uint64_t>(k)});
        const double wr = normal(gen);
        const double wi = normal(gen);
        p.s[k] = cplx(s_true[k].real() * (1.0 + sigma * wr), s_true[k].imag() * (1.0 + sigma * wi));
    }
    return p;
}

}  // namespace dsse
