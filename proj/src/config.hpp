#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "agent.hpp"
#include "balance.hpp"
#include "consensus.hpp"
#include "environment.hpp"

namespace socbal {

struct InitialSocRule {
    enum class Kind { Uniform, Fixed };
    Kind kind = Kind::Uniform;
    double low = 0.7;
    double high = 0.9;
    std::vector<double> values; // for Kind::Fixed
};

struct TrainSection {
    int episodes = 6000;
    int horizon_steps = 1440;
    double dt_hours = 1.0 / 60.0;
    RewardWeights reward;
    InitialSocRule initial_soc;
    uint64_t seed = 1;
    int workers = 1;
    int update_every = 1; // learning updates every N environment steps
    double max_unconverged_fraction = 0.0;
};

struct OutputSection {
    std::string dir = "out";
    bool include_timing = false; // real wall_ms values break byte reproducibility
};

/// Fully resolved run configuration. An empty document resolves to the
/// built-in five-unit setup: the default unit table, the default ring-like
/// topology, and a 3 kW sinusoid demand over a 1440-step day.
struct RunConfig {
    std::vector<EsuParams> units;
    int node_count = 0;
    std::set<std::pair<int, int>> edges;
    DemandProfile demand;
    ConsensusConfig consensus;
    CdbConfig cdb;
    DdpgConfig learning;
    TrainSection train;
    OutputSection output;

    std::string resolved_json;           // canonical snapshot with defaults applied
    std::string config_hash;             // fnv1a-64 of resolved_json, hex
    std::string hash_ignoring_drag_mode; // for ablation pairing checks

    GraphTopology topology() const { return GraphTopology(node_count, edges); }
    void validate() const;
};

/// Built-in defaults (equivalent to parsing "{}").
RunConfig default_config();

/// Parse a configuration document. Unknown keys are rejected and missing
/// required keys reported, both with their full key path.
RunConfig parse_config(const std::string& json_text);

RunConfig load_config(const std::string& path);

} // namespace socbal
