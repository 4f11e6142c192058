#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "deft/config.hpp"
#include "deft/harness.hpp"
#include "deft/oracle.hpp"

namespace fs = std::filesystem;
using namespace deft;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

int write_run_outputs(const Config& cfg, const RunOutputs& out, const std::string& outdir) {
    fs::create_directories(outdir);
    fs::path dir(outdir);
    write_file(dir / "metrics.csv", metrics_csv_header() + "\n" + metrics_csv_row(cfg, out.row) + "\n");
    write_file(dir / "trace.jsonl", out.trace_jsonl);
    write_file(dir / "state.json", run_state_to_json(out.state));
    write_file(dir / "verdict.json", out.verdict.to_json());
    write_file(dir / "config.json", cfg.to_json_text());
    if (!out.windows.empty()) write_file(dir / "timelapse.csv", timelapse_csv(out.windows));
    std::cout << "trace_hash=" << out.trace_hash << "\n"
              << metrics_csv_header() << "\n"
              << metrics_csv_row(cfg, out.row) << "\n"
              << (out.verdict.pass ? "verdict: pass" : "verdict: FAIL") << "\n";
    if (!out.verdict.pass)
        for (const auto& f : out.verdict.findings)
            std::cout << "  finding: " << f.code << ": " << f.detail << "\n";
    return out.verdict.pass ? 0 : 1;
}

int cmd_run(const std::string& config_path, const std::string& outdir) {
    Config cfg = Config::from_file(config_path);
    RunOptions opts;
    opts.keep_trace = true;
    RunOutputs out = run_experiment(cfg, opts);
    return write_run_outputs(cfg, out, outdir);
}

int cmd_sweep(const std::string& config_path, const std::string& out_csv) {
    std::vector<Config> grid = expand_sweep(slurp(config_path));
    std::string csv = metrics_csv_header() + "\n";
    bool all_pass = true;
    for (const Config& cfg : grid) {
        RunOutputs out = run_experiment(cfg);
        csv += metrics_csv_row(cfg, out.row) + "\n";
        if (!out.verdict.pass) {
            all_pass = false;
            std::cerr << "verdict FAIL for seed=" << cfg.seed << " batch=" << cfg.batch_size
                      << " rate=" << cfg.rate_pps << "\n";
        }
    }
    write_file(out_csv, csv);
    std::cout << csv;
    return all_pass ? 0 : 1;
}

int cmd_timelapse(const std::string& config_path, std::uint32_t burst, std::uint64_t at_packet,
                  const std::string& outdir) {
    Config cfg = Config::from_file(config_path);
    cfg.burst_count = burst;
    cfg.burst_at_packet = at_packet;
    cfg.validate();
    RunOptions opts;
    opts.keep_trace = true;
    opts.windows = true;
    RunOutputs out = run_experiment(cfg, opts);
    return write_run_outputs(cfg, out, outdir);
}

int cmd_verify(const std::string& config_path, const std::string& trace_path,
               const std::string& state_path, const std::string& verdict_out) {
    Config cfg = Config::from_file(config_path);
    TraceLog trace = trace_from_jsonl(slurp(trace_path));
    RunState state = run_state_from_json(slurp(state_path));
    std::vector<StampedPacket> stream = regenerate_stamped_stream(cfg);
    Verdict v = verify_run(trace, state, stream, cfg.global_keys);
    std::string json = v.to_json();
    if (!verdict_out.empty()) write_file(verdict_out, json);
    std::cout << json << "\n";
    return v.pass ? 0 : 1;
}

int cmd_replay(const std::string& config_path, const std::string& trace_path) {
    Config cfg = Config::from_file(config_path);
    RunOptions opts;
    opts.keep_trace = true;
    RunOutputs out = run_experiment(cfg, opts);
    std::string stored = slurp(trace_path);
    TraceLog stored_log = trace_from_jsonl(stored);
    std::cout << "replayed_hash=" << out.trace_hash << "\n"
              << "stored_hash=" << stored_log.content_hash() << "\n";
    if (out.trace_jsonl == stored) {
        std::cout << "replay: identical\n";
        return 0;
    }
    std::cout << "replay: MISMATCH\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deft: state-management simulator for stateful network functions"};
    app.require_subcommand(1);

    std::string config_path, outdir = "out", out_csv = "sweep.csv";
    std::string trace_path, state_path, verdict_out;
    std::uint32_t burst = 50;
    std::uint64_t at_packet = 60000;

    auto* run = app.add_subcommand("run", "execute one experiment config");
    run->add_option("config", config_path, "config JSON file")->required();
    run->add_option("-o,--out", outdir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "execute a parameter grid into one CSV");
    sweep->add_option("config", config_path, "config JSON file with a sweep object")->required();
    sweep->add_option("-o,--out", out_csv, "output CSV path");

    auto* lapse = app.add_subcommand("timelapse", "windowed series around a global-update burst");
    lapse->add_option("config", config_path, "config JSON file")->required();
    lapse->add_option("--burst", burst, "consecutive global updates");
    lapse->add_option("--at-packet", at_packet, "aggregate packet index of the burst");
    lapse->add_option("-o,--out", outdir, "output directory");

    auto* verify = app.add_subcommand("verify", "re-check a stored trace against the oracle");
    verify->add_option("--config", config_path)->required();
    verify->add_option("--trace", trace_path)->required();
    verify->add_option("--state", state_path)->required();
    verify->add_option("--verdict-out", verdict_out);

    auto* replay = app.add_subcommand("replay", "re-execute a run and require an identical trace");
    replay->add_option("config", config_path)->required();
    replay->add_option("--trace", trace_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, outdir);
        if (sweep->parsed()) return cmd_sweep(config_path, out_csv);
        if (lapse->parsed()) return cmd_timelapse(config_path, burst, at_packet, outdir);
        if (verify->parsed()) return cmd_verify(config_path, trace_path, state_path, verdict_out);
        if (replay->parsed()) return cmd_replay(config_path, trace_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
