#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dsse/measurement.hpp"
#include "dsse/prior.hpp"

namespace dsse {

inline constexpr int kPriorArtifactVersion = 1;

// Offline result handed to the online update. The network hash guards against
// applying a prior to a different feeder.
struct PriorArtifact {
    StateEstimate estimate;
    std::string network_hash;
    double sigma_pseudo = 0.0;
};

nlohmann::json to_json(const PriorArtifact& a);
PriorArtifact parse_prior_artifact(const nlohmann::json& j);
void save_prior_artifact(const PriorArtifact& a, const std::filesystem::path& path);
PriorArtifact load_prior_artifact(const std::filesystem::path& path);

// Frames CSV: t,sensor_id,re,im with sensor_id the index into plan.sensors.
// Magnitude-only sensors leave im empty and carry the magnitude in re.
void write_frames(std::ostream& out, const MeasurementPlan& plan,
                  const std::vector<MeasurementFrame>& frames, bool header = true);
std::vector<MeasurementFrame> read_frames(std::istream& in, const MeasurementPlan& plan);
std::vector<MeasurementFrame> read_frames(const std::filesystem::path& path, const MeasurementPlan& plan);

// Estimate CSV: t,bus,phase,re_v,im_v,std_v over the state entries.
void write_estimate(std::ostream& out, double t, const PhaseIndexMap& index, const StateEstimate& est,
                    bool header = true);

// Loads CSV: bus,phase,p_pu,q_pu with consumption positive. Returns the state-ordered
// injection vector (loads negative); unlisted entries are zero.
CVector read_loads(const std::filesystem::path& path, const PhaseIndexMap& index);
void write_loads(std::ostream& out, const PhaseIndexMap& index, const CVector& s);

// Shortest round-tripping decimal form.
std::string format_double(double x);

}  // namespace dsse
