#pragma once

#include <filesystem>

#include "dsse/network.hpp"

namespace dsse {

struct FeederOptions {
    // Series impedance given to closed switches and regulators, p.u. per phase.
    cplx switch_impedance_pu{3e-4, 3e-4};
};

// Reads a feeder directory in the published test-feeder table layout:
//   substation.csv   source_bus,kva,kv_ll
//   line_config.csv  config,phasing,r_aa,x_aa,r_ab,x_ab,r_ac,x_ac,r_bb,x_bb,r_bc,x_bc,r_cc,x_cc  (ohm/mile)
//   line_data.csv    node_a,node_b,length_ft,config
//   switch_data.csv  node_a,node_b,state            (optional)
//   spot_loads.csv   node,model,p1_kw,q1_kvar,p2_kw,q2_kvar,p3_kw,q3_kvar
// and converts it to a per-unit NetworkModel. Buses reachable only through
// open switches are dropped; every load is a constant-power wye injection and
// phases without load are marked zero-injection.
NetworkModel convert_feeder(const std::filesystem::path& dir, const FeederOptions& opts = {});

}  // namespace dsse
