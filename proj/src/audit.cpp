#include "audit.hpp"

#include <sstream>

namespace socbal {

const char* access_kind_name(AccessKind kind) {
    switch (kind) {
        case AccessKind::OwnSoc: return "own_soc";
        case AccessKind::OwnDemand: return "own_demand";
        case AccessKind::NeighborSoc: return "neighbor_soc";
        case AccessKind::ConsensusEstimate: return "consensus_estimate";
        case AccessKind::GlobalState: return "global_state";
    }
    return "unknown";
}

AuditReport decentralization_audit(const AccessLog& log, const GraphTopology& topology) {
    AuditReport report;
    report.records_checked = log.records.size();
    for (const AccessRecord& rec : log.records) {
        switch (rec.kind) {
            case AccessKind::OwnSoc:
            case AccessKind::OwnDemand:
                if (rec.target != rec.agent) {
                    report.violations.push_back(
                        {rec, "own-state read targets a different node"});
                }
                break;
            case AccessKind::NeighborSoc:
                if (!topology.has_edge(rec.agent, rec.target)) {
                    report.violations.push_back(
                        {rec, "neighbor SoC read without a topology edge"});
                }
                break;
            case AccessKind::ConsensusEstimate:
                if (rec.target != rec.agent) {
                    report.violations.push_back(
                        {rec, "consensus estimate read from another node's component"});
                }
                break;
            case AccessKind::GlobalState:
                report.violations.push_back({rec, "direct global state read"});
                break;
        }
    }
    return report;
}

std::string format_violation(const AuditViolation& v) {
    std::ostringstream os;
    os << "step " << v.record.step << " agent " << v.record.agent << " "
       << access_kind_name(v.record.kind) << "(node " << v.record.target << "): " << v.reason;
    return os.str();
}

} // namespace socbal
