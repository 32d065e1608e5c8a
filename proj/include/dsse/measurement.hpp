#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsse/network.hpp"

namespace dsse {

enum class SensorKind { voltage, current, branch };

struct SensorSpec {
    SensorKind kind = SensorKind::voltage;
    std::string bus;
    Phase phase = Phase::a;
    std::string to_bus;  // branch sensors only
    bool synchronized = true;

    std::string label() const;
};

// Ordered sensor list. The order of synchronized sensors defines the layout of
// z_measL, the order of magnitude-only sensors the layout of z_measNL.
struct MeasurementPlan {
    std::vector<SensorSpec> sensors;
    double sigma_meas = 0.01;

    std::vector<SensorSpec> synchronized() const;
    std::vector<SensorSpec> magnitude_only() const;
    std::size_t num_linear() const;
    std::size_t num_nonlinear() const;
};

// Checks sensor locations against the network; throws ValidationError.
void validate_plan(const MeasurementPlan& plan, const NetworkModel& net);
// A sensor entry without "phase" expands to every phase present at its location.
MeasurementPlan parse_plan(const nlohmann::json& j, const NetworkModel& net);
MeasurementPlan load_plan(const std::filesystem::path& path, const NetworkModel& net);
nlohmann::json to_json(const MeasurementPlan& plan);

// Sensor quantities as an affine function of the state: w = C v + d, where d
// carries the source-column contribution.
struct AffineMap {
    CMatrix c;
    CVector d;
    std::vector<std::string> labels;

    Index rows() const { return c.rows(); }
    CVector evaluate(const CVector& v) const { return c * v + d; }
};

// Rows for the given sensors regardless of their sync flag.
AffineMap sensor_map(std::span<const SensorSpec> sensors, const AdmittanceBlocks& adm,
                     const CVector& v_source);
// C_measL: synchronized sensors of the plan, in plan order.
AffineMap build_linear_map(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                           const CVector& v_source);
// Complex quantities behind the magnitude-only sensors.
AffineMap build_magnitude_map(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                              const CVector& v_source);

// C_measNL(v) = |w| entrywise.
RVector eval_nonlinear(const AffineMap& magnitude_map, const CVector& v);
RVector eval_nonlinear(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                       const CVector& v_source, const CVector& v);

// d|w|/dV_rect; rows follow the map. Throws NumericalError when |w| < kMinMagnitude.
inline constexpr double kMinMagnitude = 1e-9;
enum class ZeroMagnitude {
    error,
    zero_row,  // use the subgradient 0; lets Newton-WLS start where a current is zero (flat start)
};
RMatrix nonlinear_jacobian(const AffineMap& magnitude_map, const RVector& v_rect,
                           ZeroMagnitude at_zero = ZeroMagnitude::error);
RMatrix nonlinear_jacobian(const MeasurementPlan& plan, const AdmittanceBlocks& adm,
                           const CVector& v_source, const RVector& v_rect);

struct MeasurementFrame {
    double t = 0.0;
    CVector linear;     // z_measL
    RVector magnitude;  // z_measNL, >= 0
};

enum class RectCovarianceForm {
    coupled,   // diag(|z|^2) blocks with 2 diag(Re z Im z) off-diagonal blocks
    circular,  // diag(|z|^2) blocks only; the realification of 2 sigma^2 diag(|z|^2)
};

struct CovarianceOptions {
    RectCovarianceForm rect_form = RectCovarianceForm::coupled;
    double floor = 1e-12;
};

struct MeasurementCovariances {
    RVector linear;        // diag of Sigma_measL = 2 sigma^2 |z|^2
    RMatrix rect_linear;   // Sigma_rect,measL, 2m x 2m, layout [Re; Im]
    RVector magnitude;     // diag of Sigma_measNL = sigma^2 z^2
    std::size_t floored = 0;
};

// Covariances from reference values (measured z, or model predictions).
MeasurementCovariances measurement_covariances(double sigma_meas, const CVector& linear_ref,
                                               const RVector& magnitude_ref,
                                               const CovarianceOptions& opts = {});
MeasurementCovariances measurement_covariances(const MeasurementPlan& plan,
                                               const MeasurementFrame& frame,
                                               const CovarianceOptions& opts = {});

enum class NoiseModel {
    linearized,  // z = u (1 + w_mag + j w_ang)
    polar,       // z = (|u| + |u| w_mag) e^{j(arg u + w_ang)}
};

// Noisy reading of a phasor u; w_mag and w_ang drawn from `gen`.
template <typename Gen>
cplx noisy_phasor(cplx u, double sigma, NoiseModel model, Gen& gen);

MeasurementFrame simulate_frame(const MeasurementPlan& plan, const AffineMap& linear_map,
                                const AffineMap& magnitude_map, const CVector& v_true,
                                std::uint64_t seed, NoiseModel model = NoiseModel::linearized,
                                double t = 0.0);
MeasurementFrame simulate_frame(const MeasurementPlan& plan, const CVector& v_true,
                                const AdmittanceBlocks& adm, const CVector& v_source,
                                std::uint64_t seed, NoiseModel model = NoiseModel::linearized);

struct PseudoMeasurements {
    CVector s;  // injection convention, p.u.
    double sigma = 0.5;

    // Sigma_S_pseudo diagonal: sigma^2 |s|^2
    RVector variance() const;
    // sigma^2 [Re s^2; Im s^2]
    RVector rect_variance() const;
};

// S = S_true + Re(S_true) w_re + j Im(S_true) w_im, w ~ N(0, sigma^2).
PseudoMeasurements sample_pseudo(const CVector& s_true, double sigma, std::uint64_t seed);

}  // namespace dsse

#include <random>

template <typename Gen>
dsse::cplx dsse::noisy_phasor(cplx u, double sigma, NoiseModel model, Gen& gen) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double w_mag = sigma * normal(gen);
    const double w_ang = sigma * normal(gen);
    if (model == NoiseModel::linearized) return u * cplx(1.0 + w_mag, w_ang);
    return std::abs(u) * (1.0 + w_mag) * std::exp(cplx(0.0, std::arg(u) + w_ang));
}
