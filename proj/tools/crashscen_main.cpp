#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crashscen/error.hpp"
#include "crashscen/pipeline.hpp"

using namespace crashscen;

namespace {

struct Flags {
    std::string config;
    std::vector<std::pair<std::string, std::string>> settings;
    bool json = false;
    bool synth = false;
};

void add_setting(CLI::App& app, Flags& f, const std::string& flag, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        flag, [&f, key](const std::string& v) { f.settings.emplace_back(key, v); }, help);
}

void add_repeatable(CLI::App& app, Flags& f, const std::string& flag, const std::string& key, const std::string& help) {
    app.add_option_function<std::vector<std::string>>(
           flag,
           [&f, key](const std::vector<std::string>& vs) {
               for (const auto& v : vs) f.settings.emplace_back(key, v);
           },
           help)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll)
        ->allow_extra_args(false);
}

int exit_code(const Error& e) { return static_cast<int>(e.kind()); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crash sequence scenario mining pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    Flags f;
    app.add_option("--config", f.config, "key = value configuration file");
    app.add_flag("--json", f.json, "print a JSON stage summary on stdout");
    app.add_flag("--synth", f.synth, "with 'all': generate synthetic raw tables first");
    add_setting(app, f, "--workdir", "workdir", "artifact directory");
    add_setting(app, f, "--seed", "seed", "master seed");
    add_setting(app, f, "--threads", "threads", "worker thread cap (0 = hardware)");
    add_setting(app, f, "--n-crashes", "synth_crashes", "synthetic crash count");
    add_setting(app, f, "--accident", "accident", "raw accident table");
    add_setting(app, f, "--vehicle", "vehicle", "raw vehicle table");
    add_setting(app, f, "--event", "event", "raw event table");
    add_setting(app, f, "--indel", "indel", "indel cost");
    add_setting(app, f, "--substitution", "substitution", "substitution cost");
    add_setting(app, f, "--matrix-format", "matrix_format", "binary or csv");
    add_setting(app, f, "--k-range", "k_range", "sweep range, e.g. 2..25");
    add_repeatable(app, f, "--k", "k", "types for one configuration, e.g. D=12");
    app.add_flag_callback("--k-auto", [&f] { f.settings.emplace_back("k_auto", "true"); },
                          "choose k per configuration from quality.csv");
    add_setting(app, f, "--penalty", "penalty", "parameter penalty per free parameter");
    add_setting(app, f, "--alpha", "alpha", "CPT smoothing pseudo-count");
    add_setting(app, f, "--restarts", "restarts", "random restarts for structure search");
    add_setting(app, f, "--constraints", "constraints", "arc constraints JSON file");
    add_repeatable(app, f, "--forbid", "forbid", "forbidden arc parent:child");
    add_repeatable(app, f, "--force", "force", "forced arc parent:child");
    add_setting(app, f, "--weak-threshold", "weak_threshold", "arcs with strength above this are weak");
    add_setting(app, f, "--queries", "queries", "query JSON file");
    add_setting(app, f, "-R,--replications", "replications", "inference replications");
    add_setting(app, f, "-N,--samples", "samples", "particles per replication");
    add_setting(app, f, "--scale", "scale", "population for count outputs");

    std::vector<std::string> names = pipeline_stages();
    names.push_back("all");
    for (const auto& n : names) app.add_subcommand(n, "run the " + n + " stage")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    const std::string stage = app.get_subcommands().front()->get_name();

    std::vector<StageSummary> done;
    int rc = 0;
    std::string error;
    std::string current = stage;
    try {
        PipelineConfig cfg;
        if (!f.config.empty()) cfg.apply_file(f.config);
        if (const char* wd = std::getenv("CRASHSCEN_WORKDIR"); wd && *wd) cfg.workdir = wd;
        for (const auto& [k, v] : f.settings) cfg.set(k, v);
        if (!cfg.constraints.empty() && !std::filesystem::exists(cfg.constraints))
            throw ConfigError("constraints file not found: " + cfg.constraints.string());
        if (!cfg.queries.empty() && !std::filesystem::exists(cfg.queries))
            throw ConfigError("query file not found: " + cfg.queries.string());

        if (stage == "all") {
            for (const auto& st : pipeline_stages()) {
                if (st == "synth" && !f.synth) continue;
                current = st;
                done.push_back(run_stage(st, cfg));
            }
        } else {
            done.push_back(run_stage(stage, cfg));
        }
    } catch (const Error& e) {
        rc = exit_code(e);
        error = e.what();
    } catch (const std::filesystem::filesystem_error& e) {
        rc = 3;
        error = e.what();
    } catch (const std::exception& e) {
        rc = 4;
        error = e.what();
    }
    if (rc != 0) std::cerr << "stage " << current << " failed: " << error << '\n';
    if (f.json) std::cout << summary_json(done, rc, error);
    return rc;
}
