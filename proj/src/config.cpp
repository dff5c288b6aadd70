#include "config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace socbal {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

// Strict object reader: every key must be consumed through one of the
// accessors, leftovers are reported with their full path.
class Reader {
public:
    Reader(const json& node, std::string path) : node_(&node), path_(std::move(path)) {
        if (!node_->is_object()) fail("'" + path_ + "' must be an object");
    }

    bool has(const char* key) const { return node_->contains(key); }

    const json& raw(const char* key) {
        mark(key);
        return (*node_)[key];
    }

    double num(const char* key, double def) { return has(key) ? num_req(key) : def; }
    double num_req(const char* key) {
        require(key);
        const json& v = raw(key);
        if (!v.is_number()) fail("'" + join(path_, key) + "' must be a number");
        return v.get<double>();
    }

    int integer(const char* key, int def) { return has(key) ? integer_req(key) : def; }
    int integer_req(const char* key) {
        require(key);
        const json& v = raw(key);
        if (!v.is_number_integer()) fail("'" + join(path_, key) + "' must be an integer");
        return v.get<int>();
    }

    uint64_t uinteger(const char* key, uint64_t def) {
        if (!has(key)) return def;
        require(key);
        const json& v = raw(key);
        if (!v.is_number_unsigned() && !v.is_number_integer()) {
            fail("'" + join(path_, key) + "' must be a nonnegative integer");
        }
        if (v.is_number_integer() && v.get<int64_t>() < 0) {
            fail("'" + join(path_, key) + "' must be a nonnegative integer");
        }
        return v.get<uint64_t>();
    }

    bool boolean(const char* key, bool def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_boolean()) fail("'" + join(path_, key) + "' must be a boolean");
        return v.get<bool>();
    }

    std::string str(const char* key, const std::string& def) {
        if (!has(key)) return def;
        return str_req(key);
    }
    std::string str_req(const char* key) {
        require(key);
        const json& v = raw(key);
        if (!v.is_string()) fail("'" + join(path_, key) + "' must be a string");
        return v.get<std::string>();
    }

    std::vector<double> num_array_req(const char* key) {
        require(key);
        const json& v = raw(key);
        if (!v.is_array()) fail("'" + join(path_, key) + "' must be an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) fail("'" + join(path_, key) + "' must contain only numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<int> int_array(const char* key, std::vector<int> def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_array()) fail("'" + join(path_, key) + "' must be an array of integers");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer()) {
                fail("'" + join(path_, key) + "' must contain only integers");
            }
            out.push_back(e.get<int>());
        }
        return out;
    }

    void finish() {
        for (auto it = node_->begin(); it != node_->end(); ++it) {
            if (!consumed_.count(it.key())) {
                fail("unknown key '" + join(path_, it.key()) + "'");
            }
        }
    }

    const std::string& path() const { return path_; }

private:
    void mark(const char* key) { consumed_.insert(key); }
    void require(const char* key) {
        if (!has(key)) fail("missing required key '" + join(path_, key) + "'");
    }

    const json* node_;
    std::string path_;
    std::set<std::string> consumed_;
};

std::vector<EsuParams> default_units() {
    const double caps[] = {700, 1000, 1200, 1500, 1800};
    const double plates[] = {180, 300, 360, 480, 600};
    std::vector<EsuParams> units;
    for (int i = 0; i < 5; ++i) {
        EsuParams u;
        u.capacity_kwh = caps[i];
        u.p_min_kw = -plates[i];
        u.p_max_kw = plates[i];
        u.soc_min = 0.1;
        u.soc_max = 0.9;
        u.efficiency = 0.99;
        units.push_back(u);
    }
    return units;
}

std::set<std::pair<int, int>> default_edges() {
    return {{0, 1}, {0, 3}, {0, 4}, {1, 2}, {2, 3}, {2, 4}};
}

EsuParams parse_unit(const json& node, const std::string& path) {
    Reader r(node, path);
    EsuParams u;
    u.capacity_kwh = r.num_req("capacity_kwh");
    u.p_min_kw = r.num_req("p_min_kw");
    u.p_max_kw = r.num_req("p_max_kw");
    u.soc_min = r.num("soc_min", 0.1);
    u.soc_max = r.num("soc_max", 0.9);
    u.efficiency = r.num("efficiency", 0.99);
    u.degr_b1 = r.num("degr_b1", 1e-4);
    u.degr_b2 = r.num("degr_b2", 0.5);
    u.c_rate = r.num("c_rate", 1.0);
    u.install_cost = r.num("install_cost", 1000.0);
    u.eol_retained_fraction = r.num("eol_retained_fraction", 0.8);
    r.finish();
    return u;
}

void parse_topology(const json& node, const std::string& path, RunConfig& cfg) {
    Reader r(node, path);
    if (r.has("adjacency")) {
        const json& adj = r.raw("adjacency");
        if (!adj.is_object()) fail("'" + join(path, "adjacency") + "' must be an object");
        int max_node = -1;
        std::set<std::pair<int, int>> directed;
        for (auto it = adj.begin(); it != adj.end(); ++it) {
            int a;
            try {
                size_t pos = 0;
                a = std::stoi(it.key(), &pos);
                if (pos != it.key().size()) throw std::invalid_argument("");
            } catch (...) {
                fail("'" + join(path, "adjacency") + "' keys must be node ids, got '" +
                     it.key() + "'");
                return;
            }
            if (a < 0) fail("'" + join(path, "adjacency") + "' node ids must be >= 0");
            max_node = std::max(max_node, a);
            if (!it.value().is_array()) {
                fail("'" + join(path, "adjacency") + "." + it.key() + "' must be an array");
            }
            for (const auto& e : it.value()) {
                if (!e.is_number_integer()) {
                    fail("'" + join(path, "adjacency") + "." + it.key() +
                         "' must contain integer node ids");
                }
                int b = e.get<int>();
                max_node = std::max(max_node, b);
                directed.insert({a, b});
            }
        }
        cfg.node_count = max_node + 1;
        cfg.edges.clear();
        for (auto [a, b] : directed) {
            if (!directed.count({b, a})) {
                fail("'" + join(path, "adjacency") + "' must be symmetric: " + std::to_string(a) +
                     " lists " + std::to_string(b) + " but not the other way around");
            }
            cfg.edges.insert(std::minmax(a, b));
        }
    }
    r.finish();
}

void parse_demand(const json& node, const std::string& path, DemandProfile& d) {
    Reader r(node, path);
    std::string kind = r.str("kind", "sinusoid");
    if (kind == "sinusoid") {
        d.kind = DemandKind::Sinusoid;
    } else if (kind == "ramp_then_flat") {
        d.kind = DemandKind::RampThenFlat;
    } else if (kind == "trace") {
        d.kind = DemandKind::Trace;
    } else {
        fail("'" + join(path, "kind") + "' must be one of sinusoid|ramp_then_flat|trace");
    }
    d.amplitude_kw = r.num("amplitude_kw", 3.0);
    d.period_steps = r.integer("period_steps", 720);
    d.scale = r.num("scale", 1.0);
    if (d.kind == DemandKind::Trace) {
        d.trace = r.num_array_req("trace");
    } else if (r.has("trace")) {
        fail("'" + join(path, "trace") + "' is only valid for the trace kind");
    }
    std::string split = r.str("split", "uniform");
    if (split != "uniform") fail("'" + join(path, "split") + "' must be 'uniform'");
    r.finish();
}

void parse_initial_soc(const json& node, const std::string& path, InitialSocRule& rule) {
    Reader r(node, path);
    std::string kind = r.str_req("kind");
    if (kind == "uniform") {
        rule.kind = InitialSocRule::Kind::Uniform;
        rule.low = r.num_req("low");
        rule.high = r.num_req("high");
        if (!(rule.low <= rule.high)) fail("'" + path + "' needs low <= high");
    } else if (kind == "fixed") {
        rule.kind = InitialSocRule::Kind::Fixed;
        rule.values = r.num_array_req("values");
    } else {
        fail("'" + join(path, "kind") + "' must be 'uniform' or 'fixed'");
    }
    r.finish();
}

Activation parse_activation(const std::string& name, const std::string& path) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    fail("'" + path + "' must be 'relu' or 'tanh'");
}

json resolved_json_doc(const RunConfig& cfg) {
    json doc;
    json units = json::array();
    for (const auto& u : cfg.units) {
        units.push_back({{"capacity_kwh", u.capacity_kwh},
                         {"p_min_kw", u.p_min_kw},
                         {"p_max_kw", u.p_max_kw},
                         {"soc_min", u.soc_min},
                         {"soc_max", u.soc_max},
                         {"efficiency", u.efficiency},
                         {"degr_b1", u.degr_b1},
                         {"degr_b2", u.degr_b2},
                         {"c_rate", u.c_rate},
                         {"install_cost", u.install_cost},
                         {"eol_retained_fraction", u.eol_retained_fraction}});
    }
    doc["units"] = units;

    json adjacency = json::object();
    {
        std::vector<std::vector<int>> nb(cfg.node_count);
        for (auto [a, b] : cfg.edges) {
            nb[a].push_back(b);
            nb[b].push_back(a);
        }
        for (int i = 0; i < cfg.node_count; ++i) {
            std::sort(nb[i].begin(), nb[i].end());
            adjacency[std::to_string(i)] = nb[i];
        }
    }
    doc["topology"] = {{"adjacency", adjacency}};

    json demand = {{"amplitude_kw", cfg.demand.amplitude_kw},
                   {"period_steps", cfg.demand.period_steps},
                   {"scale", cfg.demand.scale},
                   {"split", "uniform"}};
    switch (cfg.demand.kind) {
        case DemandKind::Sinusoid: demand["kind"] = "sinusoid"; break;
        case DemandKind::RampThenFlat: demand["kind"] = "ramp_then_flat"; break;
        case DemandKind::Trace:
            demand["kind"] = "trace";
            demand["trace"] = *cfg.demand.trace;
            break;
    }
    doc["demand"] = demand;

    doc["consensus"] = {{"tolerance", cfg.consensus.tolerance},
                        {"max_iterations", cfg.consensus.max_iterations}};
    doc["cdb"] = {{"epsilon_kw", cfg.cdb.epsilon_kw},
                  {"delta_p_kw", cfg.cdb.delta_p_kw},
                  {"max_rounds", cfg.cdb.max_rounds},
                  {"drag_mode",
                   cfg.cdb.drag_mode == DragMode::Counterfactual ? "counterfactual" : "factual"}};
    doc["learning"] = {{"gamma", cfg.learning.gamma},
                       {"tau", cfg.learning.tau},
                       {"batch_size", cfg.learning.batch_size},
                       {"actor_lr", cfg.learning.actor_lr},
                       {"critic_lr", cfg.learning.critic_lr},
                       {"replay_capacity", cfg.learning.replay_capacity},
                       {"learn_start", cfg.learning.learn_start},
                       {"noise_sigma_kw", cfg.learning.noise_sigma_kw},
                       {"noise_decay", cfg.learning.noise_decay},
                       {"hidden_dims", cfg.learning.hidden_dims},
                       {"hidden_activation",
                        cfg.learning.hidden_activation == Activation::Relu ? "relu" : "tanh"}};

    json initial;
    if (cfg.train.initial_soc.kind == InitialSocRule::Kind::Uniform) {
        initial = {{"kind", "uniform"}, {"low", cfg.train.initial_soc.low},
                   {"high", cfg.train.initial_soc.high}};
    } else {
        initial = {{"kind", "fixed"}, {"values", cfg.train.initial_soc.values}};
    }
    doc["train"] = {{"episodes", cfg.train.episodes},
                    {"horizon_steps", cfg.train.horizon_steps},
                    {"dt_hours", cfg.train.dt_hours},
                    {"alpha", cfg.train.reward.alpha},
                    {"beta", cfg.train.reward.beta},
                    {"initial_soc", initial},
                    {"seed", cfg.train.seed},
                    {"workers", cfg.train.workers},
                    {"update_every", cfg.train.update_every},
                    {"max_unconverged_fraction", cfg.train.max_unconverged_fraction}};
    doc["output"] = {{"dir", cfg.output.dir}, {"include_timing", cfg.output.include_timing}};
    return doc;
}

std::string hex64(uint64_t v) {
    char buf[17];
    snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

void RunConfig::validate() const {
    if (units.empty()) fail("at least one unit is required");
    for (size_t i = 0; i < units.size(); ++i) {
        units[i].validate("units[" + std::to_string(i) + "]");
    }
    if (node_count != static_cast<int>(units.size())) {
        fail("topology covers " + std::to_string(node_count) + " nodes but " +
             std::to_string(units.size()) + " units are configured");
    }
    topology(); // throws on disconnected graphs
    demand.validate(train.horizon_steps);
    consensus.validate();
    cdb.validate();
    learning.validate();
    if (train.episodes < 1) fail("train.episodes must be >= 1");
    if (train.horizon_steps < 1) fail("train.horizon_steps must be >= 1");
    if (!(train.dt_hours > 0.0)) fail("train.dt_hours must be > 0");
    if (train.workers < 1) fail("train.workers must be >= 1");
    if (train.update_every < 1) fail("train.update_every must be >= 1");
    if (train.max_unconverged_fraction < 0.0 || train.max_unconverged_fraction > 1.0) {
        fail("train.max_unconverged_fraction must be in [0,1]");
    }
    if (train.initial_soc.kind == InitialSocRule::Kind::Fixed &&
        train.initial_soc.values.size() != units.size()) {
        fail("train.initial_soc.values must list one SoC per unit");
    }
    for (size_t i = 0; i < units.size(); ++i) {
        double lo, hi;
        if (train.initial_soc.kind == InitialSocRule::Kind::Fixed) {
            lo = hi = train.initial_soc.values[i];
        } else {
            lo = train.initial_soc.low;
            hi = train.initial_soc.high;
        }
        if (lo < units[i].soc_min || hi > units[i].soc_max) {
            fail("train.initial_soc exceeds the SoC range of units[" + std::to_string(i) + "]");
        }
    }
}

RunConfig default_config() { return parse_config("{}"); }

RunConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }

    RunConfig cfg;
    Reader root(doc, "");

    if (root.has("units")) {
        const json& arr = root.raw("units");
        if (!arr.is_array() || arr.empty()) fail("'units' must be a nonempty array");
        for (size_t i = 0; i < arr.size(); ++i) {
            cfg.units.push_back(parse_unit(arr[i], "units[" + std::to_string(i) + "]"));
        }
    } else {
        cfg.units = default_units();
    }

    cfg.node_count = static_cast<int>(cfg.units.size());
    if (cfg.node_count == 5) {
        cfg.edges = default_edges();
    } else if (cfg.node_count == 1) {
        cfg.edges = {};
    } else {
        // fall back to a ring so any unit count has a connected default
        for (int i = 0; i < cfg.node_count; ++i) {
            cfg.edges.insert(std::minmax(i, (i + 1) % cfg.node_count));
        }
    }
    if (root.has("topology")) {
        parse_topology(root.raw("topology"), "topology", cfg);
    }

    if (root.has("demand")) parse_demand(root.raw("demand"), "demand", cfg.demand);

    if (root.has("consensus")) {
        Reader r(root.raw("consensus"), "consensus");
        cfg.consensus.tolerance = r.num("tolerance", cfg.consensus.tolerance);
        cfg.consensus.max_iterations = r.integer("max_iterations", cfg.consensus.max_iterations);
        r.finish();
    }

    if (root.has("cdb")) {
        Reader r(root.raw("cdb"), "cdb");
        cfg.cdb.epsilon_kw = r.num("epsilon_kw", cfg.cdb.epsilon_kw);
        cfg.cdb.delta_p_kw = r.num("delta_p_kw", cfg.cdb.delta_p_kw);
        cfg.cdb.max_rounds = r.integer("max_rounds", cfg.cdb.max_rounds);
        std::string mode = r.str("drag_mode", "counterfactual");
        if (mode == "counterfactual") {
            cfg.cdb.drag_mode = DragMode::Counterfactual;
        } else if (mode == "factual") {
            cfg.cdb.drag_mode = DragMode::Factual;
        } else {
            fail("'cdb.drag_mode' must be 'counterfactual' or 'factual'");
        }
        r.finish();
    }

    if (root.has("learning")) {
        Reader r(root.raw("learning"), "learning");
        cfg.learning.gamma = r.num("gamma", cfg.learning.gamma);
        cfg.learning.tau = r.num("tau", cfg.learning.tau);
        cfg.learning.batch_size = r.integer("batch_size", cfg.learning.batch_size);
        cfg.learning.actor_lr = r.num("actor_lr", cfg.learning.actor_lr);
        cfg.learning.critic_lr = r.num("critic_lr", cfg.learning.critic_lr);
        cfg.learning.replay_capacity = r.integer("replay_capacity", cfg.learning.replay_capacity);
        cfg.learning.learn_start = r.integer("learn_start", cfg.learning.learn_start);
        cfg.learning.noise_sigma_kw = r.num("noise_sigma_kw", cfg.learning.noise_sigma_kw);
        cfg.learning.noise_decay = r.num("noise_decay", cfg.learning.noise_decay);
        cfg.learning.hidden_dims = r.int_array("hidden_dims", cfg.learning.hidden_dims);
        cfg.learning.hidden_activation =
            parse_activation(r.str("hidden_activation", "relu"), "learning.hidden_activation");
        r.finish();
    }

    if (root.has("train")) {
        Reader r(root.raw("train"), "train");
        cfg.train.episodes = r.integer("episodes", cfg.train.episodes);
        cfg.train.horizon_steps = r.integer("horizon_steps", cfg.train.horizon_steps);
        cfg.train.dt_hours = r.num("dt_hours", cfg.train.dt_hours);
        cfg.train.reward.alpha = r.num("alpha", cfg.train.reward.alpha);
        cfg.train.reward.beta = r.num("beta", cfg.train.reward.beta);
        if (r.has("initial_soc")) {
            parse_initial_soc(r.raw("initial_soc"), "train.initial_soc", cfg.train.initial_soc);
        }
        cfg.train.seed = r.uinteger("seed", cfg.train.seed);
        cfg.train.workers = r.integer("workers", cfg.train.workers);
        cfg.train.update_every = r.integer("update_every", cfg.train.update_every);
        cfg.train.max_unconverged_fraction =
            r.num("max_unconverged_fraction", cfg.train.max_unconverged_fraction);
        r.finish();
    }

    if (root.has("output")) {
        Reader r(root.raw("output"), "output");
        cfg.output.dir = r.str("dir", cfg.output.dir);
        cfg.output.include_timing = r.boolean("include_timing", cfg.output.include_timing);
        r.finish();
    }
    root.finish();

    cfg.validate();

    json resolved = resolved_json_doc(cfg);
    cfg.resolved_json = resolved.dump(2);
    cfg.config_hash = hex64(fnv1a64(cfg.resolved_json));
    resolved["cdb"]["drag_mode"] = "*";
    cfg.hash_ignoring_drag_mode = hex64(fnv1a64(resolved.dump(2)));
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

} // namespace socbal
