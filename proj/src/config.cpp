#include "deft/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace deft {

using json = nlohmann::json;

namespace {

void flatten(const json& obj, const std::string& prefix, std::map<std::string, json>& out) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it.value().is_object() && key != "sweep")
            flatten(it.value(), key, out);
        else
            out[key] = it.value();
    }
}

template <typename T>
void read_num(std::map<std::string, json>& kv, const std::string& key, T& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (!it->second.is_number())
        throw ConfigError("config key '" + key + "' must be a number");
    field = it->second.get<T>();
    kv.erase(it);
}

void read_str(std::map<std::string, json>& kv, const std::string& key, std::string& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    if (!it->second.is_string())
        throw ConfigError("config key '" + key + "' must be a string");
    field = it->second.get<std::string>();
    kv.erase(it);
}

Directive parse_directive(const json& j) {
    if (!j.is_object()) throw ConfigError("scenario entries must be objects");
    Directive d;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "time_ns") d.time_ns = it.value().get<VirtualTime>();
        else if (k == "op") d.op = it.value().get<std::string>();
        else if (k == "nf" || k == "node" || k == "unit" || k == "flow" || k == "rate_pps")
            d.arg0 = it.value().get<std::int64_t>();
        else if (k == "to_pair" || k == "until_ns")
            d.arg1 = it.value().get<std::int64_t>();
        else
            throw ConfigError("unknown scenario key '" + k + "'");
    }
    if (d.op.empty()) throw ConfigError("scenario entry missing 'op'");
    return d;
}

}  // namespace

void Config::validate() const {
    if (batch_size == 0) throw ConfigError("config key 'nf.batch_size' must be >= 1");
    if (buffer_batches == 0) throw ConfigError("config key 'nf.buffer_batches' must be >= 1");
    if (unit_count == 0) throw ConfigError("config key 'stamper.unit_count' must be >= 1");
    if (flow_count == 0) throw ConfigError("config key 'traffic.flow_count' must be >= 1");
    if (rate_pps <= 0) throw ConfigError("config key 'traffic.rate_pps' must be > 0");
    if (payload_len == 0) throw ConfigError("config key 'traffic.payload_len' must be > 0");
    if (nf_pairs == 0) throw ConfigError("config key 'nf.pairs' must be >= 1");
    if (global_keys == 0) throw ConfigError("config key 'nf.global_keys' must be >= 1");
    if (reorder_prob < 0.0 || reorder_prob > 1.0)
        throw ConfigError("config key 'net.reorder_prob' must be in [0,1]");
    if (consensus_impl != "sequencer" && consensus_impl != "quorum")
        throw ConfigError("config key 'consensus.impl' must be 'sequencer' or 'quorum'");
    if (updates_per_batch > batch_size)
        throw ConfigError("config key 'traffic.updates_per_batch' must be <= nf.batch_size");
}

Config Config::from_json_text(const std::string& text) {
    json root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");

    std::map<std::string, json> kv;
    flatten(root, "", kv);
    kv.erase("sweep");

    Config c;
    read_num(kv, "seed", c.seed);
    read_num(kv, "traffic.rate_pps", c.rate_pps);
    read_num(kv, "traffic.flow_count", c.flow_count);
    read_num(kv, "traffic.packet_count", c.packet_count);
    read_num(kv, "traffic.payload_len", c.payload_len);
    read_num(kv, "traffic.updates_per_batch", c.updates_per_batch);
    read_num(kv, "traffic.burst_at_packet", c.burst_at_packet);
    read_num(kv, "traffic.burst_count", c.burst_count);
    read_num(kv, "stamper.unit_count", c.unit_count);
    read_num(kv, "net.base_latency_ns", c.base_latency_ns);
    read_num(kv, "net.jitter_ns", c.jitter_ns);
    read_num(kv, "net.reorder_prob", c.reorder_prob);
    read_num(kv, "net.reorder_penalty_min_ns", c.reorder_penalty_min_ns);
    read_num(kv, "net.reorder_penalty_max_ns", c.reorder_penalty_max_ns);
    read_num(kv, "net.ctrl_latency_ns", c.ctrl_latency_ns);
    read_num(kv, "nf.batch_size", c.batch_size);
    read_num(kv, "nf.buffer_batches", c.buffer_batches);
    read_num(kv, "nf.work_cost_ns", c.work_cost_ns);
    read_num(kv, "nf.global_keys", c.global_keys);
    read_num(kv, "nf.pairs", c.nf_pairs);
    read_str(kv, "consensus.impl", c.consensus_impl);
    read_num(kv, "consensus.commit_latency_ns", c.commit_latency_ns);
    read_num(kv, "consensus.quorum_size", c.quorum_size);
    read_num(kv, "control.ping_interval_ns", c.ping_interval_ns);
    read_num(kv, "control.suspect_threshold", c.suspect_threshold);
    read_num(kv, "control.spare_nfs", c.spare_nfs);
    read_num(kv, "nf.backoff_initial_ns", c.backoff_initial_ns);
    read_num(kv, "nf.backoff_cap_ns", c.backoff_cap_ns);
    read_num(kv, "metrics.tracked_n", c.tracked_n);

    if (auto it = kv.find("stamper.manager_failure_windows"); it != kv.end()) {
        for (const auto& w : it->second)
            c.manager_failure_windows.emplace_back(w.at(0).get<VirtualTime>(),
                                                   w.at(1).get<VirtualTime>());
        kv.erase(it);
    }
    if (auto it = kv.find("stamper.unit_failure_windows"); it != kv.end()) {
        for (const auto& w : it->second)
            c.unit_failure_windows.emplace_back(w.at(0).get<VirtualTime>(),
                                                w.at(1).get<VirtualTime>(),
                                                w.at(2).get<std::uint32_t>());
        kv.erase(it);
    }
    if (auto it = kv.find("scenario"); it != kv.end()) {
        if (!it->second.is_array()) throw ConfigError("config key 'scenario' must be an array");
        for (const auto& d : it->second) c.scenario.push_back(parse_directive(d));
        kv.erase(it);
    }
    if (auto it = kv.find("mutation"); it != kv.end()) {
        std::string m = it->second.get<std::string>();
        if (m == "none") c.mutation = Mutation::None;
        else if (m == "skip_marker") c.mutation = Mutation::SkipMarker;
        else if (m == "release_before_commit") c.mutation = Mutation::ReleaseBeforeCommit;
        else if (m == "bypass_pending") c.mutation = Mutation::BypassPending;
        else throw ConfigError("config key 'mutation' has unknown value '" + m + "'");
        kv.erase(it);
    }

    if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
    c.validate();
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string Config::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["traffic.rate_pps"] = rate_pps;
    j["traffic.flow_count"] = flow_count;
    j["traffic.packet_count"] = packet_count;
    j["traffic.payload_len"] = payload_len;
    j["traffic.updates_per_batch"] = updates_per_batch;
    j["traffic.burst_at_packet"] = burst_at_packet;
    j["traffic.burst_count"] = burst_count;
    j["stamper.unit_count"] = unit_count;
    j["net.base_latency_ns"] = base_latency_ns;
    j["net.jitter_ns"] = jitter_ns;
    j["net.reorder_prob"] = reorder_prob;
    j["net.reorder_penalty_min_ns"] = reorder_penalty_min_ns;
    j["net.reorder_penalty_max_ns"] = reorder_penalty_max_ns;
    j["net.ctrl_latency_ns"] = ctrl_latency_ns;
    j["nf.batch_size"] = batch_size;
    j["nf.buffer_batches"] = buffer_batches;
    j["nf.work_cost_ns"] = work_cost_ns;
    j["nf.global_keys"] = global_keys;
    j["nf.pairs"] = nf_pairs;
    j["consensus.impl"] = consensus_impl;
    j["consensus.commit_latency_ns"] = commit_latency_ns;
    j["consensus.quorum_size"] = quorum_size;
    j["control.ping_interval_ns"] = ping_interval_ns;
    j["control.suspect_threshold"] = suspect_threshold;
    j["control.spare_nfs"] = spare_nfs;
    j["metrics.tracked_n"] = tracked_n;
    return j.dump(2);
}

std::vector<Config> expand_sweep(const std::string& json_text) {
    json root = json::parse(json_text, nullptr, true, true);
    json sweep = root.value("sweep", json::object());
    root.erase("sweep");

    std::vector<json> combos{root};
    for (auto it = sweep.begin(); it != sweep.end(); ++it) {
        if (!it.value().is_array())
            throw ConfigError("sweep entry '" + it.key() + "' must be an array");
        std::vector<json> next;
        for (const auto& base : combos)
            for (const auto& v : it.value()) {
                json j = base;
                j[it.key()] = v;
                next.push_back(std::move(j));
            }
        combos = std::move(next);
    }

    std::vector<Config> out;
    out.reserve(combos.size());
    for (const auto& j : combos) out.push_back(Config::from_json_text(j.dump()));
    return out;
}

}  // namespace deft
