#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "deft/config.hpp"
#include "deft/harness.hpp"
#include "deft/model.hpp"
#include "deft/oracle.hpp"

namespace py = pybind11;
using namespace deft;

namespace {

py::dict row_to_dict(const Metrics::Row& r) {
    py::dict d;
    d["latency_ns"] = r.latency_ns;
    d["tau_path_ns"] = r.tau_path_ns;
    d["tau_pre_ns"] = r.tau_pre_ns;
    d["tau_proc_ns"] = r.tau_proc_ns;
    d["tau_post_ns"] = r.tau_post_ns;
    d["throughput_pps"] = r.throughput_pps;
    d["drops"] = r.drops;
    d["drop_frac"] = r.drop_frac;
    d["stamped"] = r.stamped;
    d["released"] = r.released;
    d["batches"] = r.batches;
    d["global_commits"] = r.global_commits;
    return d;
}

py::dict verdict_to_dict(const Verdict& v) {
    py::dict d;
    d["pass"] = v.pass;
    py::list findings;
    for (const auto& f : v.findings) {
        py::dict fd;
        fd["code"] = f.code;
        fd["detail"] = f.detail;
        findings.append(fd);
    }
    d["findings"] = findings;
    return d;
}

py::dict run_from_json(const std::string& config_json, bool keep_trace, bool windows) {
    Config cfg = Config::from_json_text(config_json);
    RunOptions opts;
    opts.keep_trace = keep_trace;
    opts.windows = windows;
    RunOutputs out = run_experiment(cfg, opts);
    py::dict d;
    d["metrics"] = row_to_dict(out.row);
    d["verdict"] = verdict_to_dict(out.verdict);
    d["trace_hash"] = out.trace_hash;
    d["state_json"] = run_state_to_json(out.state);
    if (keep_trace) d["trace_jsonl"] = out.trace_jsonl;
    if (windows) {
        py::list ws;
        for (const auto& w : out.windows) {
            py::dict wd;
            wd["start_ns"] = w.start;
            wd["throughput_pps"] = w.throughput_pps;
            wd["avg_latency_ns"] = w.avg_latency_ns;
            wd["releases"] = w.releases;
            ws.append(wd);
        }
        d["windows"] = ws;
    }
    return d;
}

py::dict verify_from_json(const std::string& config_json, const std::string& trace_jsonl,
                          const std::string& state_json) {
    Config cfg = Config::from_json_text(config_json);
    TraceLog trace = trace_from_jsonl(trace_jsonl);
    RunState state = run_state_from_json(state_json);
    Verdict v = verify_run(trace, state, regenerate_stamped_stream(cfg), cfg.global_keys);
    return verdict_to_dict(v);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "deft: distributed, elastic, fault-tolerant NF state management (simulated)";

    m.def("run_experiment", &run_from_json, py::arg("config_json"),
          py::arg("keep_trace") = false, py::arg("windows") = false,
          "Run one experiment config (JSON text) to quiescence; returns metrics, "
          "oracle verdict, trace hash and the end-state snapshot.");
    m.def("verify", &verify_from_json, py::arg("config_json"), py::arg("trace_jsonl"),
          py::arg("state_json"), "Re-check a stored trace and state snapshot against the oracle.");
    m.def(
        "replay_hash",
        [](const std::string& config_json) {
            Config cfg = Config::from_json_text(config_json);
            return run_experiment(cfg).trace_hash;
        },
        py::arg("config_json"), "Run a config and return the trace content hash.");
    m.def(
        "flow_hash",
        [](std::uint32_t src_ip, std::uint32_t dst_ip, std::uint16_t src_port,
           std::uint16_t dst_port, std::uint8_t protocol, std::size_t unit_count) {
            return flow_hash(FlowKey{src_ip, dst_ip, src_port, dst_port, protocol}, unit_count);
        },
        py::arg("src_ip"), py::arg("dst_ip"), py::arg("src_port"), py::arg("dst_port"),
        py::arg("protocol"), py::arg("unit_count"),
        "Deterministic 5-tuple to stamping-unit index.");
    m.def("default_config_json", [] { return Config{}.to_json_text(); });

#ifdef DEFT_VERSION
    m.attr("__version__") = DEFT_VERSION;
#else
    m.attr("__version__") = "dev";
#endif
}
