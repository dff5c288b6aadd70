#pragma once

#include <string>
#include <vector>

#include "consensus.hpp"

namespace socbal {

enum class AccessKind { OwnSoc, OwnDemand, NeighborSoc, ConsensusEstimate, GlobalState };

const char* access_kind_name(AccessKind kind);

/// One datum consumed by an agent while acting or learning.
struct AccessRecord {
    int step = 0;
    int agent = 0;
    AccessKind kind = AccessKind::OwnSoc;
    int target = -1; // node id the datum belongs to
};

/// Data-access trace filled by the orchestrator when tagging is enabled.
struct AccessLog {
    bool enabled = false;
    std::vector<AccessRecord> records;

    void note(int step, int agent, AccessKind kind, int target) {
        if (enabled) records.push_back({step, agent, kind, target});
    }
};

struct AuditViolation {
    AccessRecord record;
    std::string reason;
};

struct AuditReport {
    size_t records_checked = 0;
    std::vector<AuditViolation> violations;

    bool clean() const { return violations.empty(); }
};

/// Verifies that every logged access is the agent's own state, a neighbor's
/// SoC along a configured edge, or the agent's own consensus output.
AuditReport decentralization_audit(const AccessLog& log, const GraphTopology& topology);

std::string format_violation(const AuditViolation& v);

} // namespace socbal
