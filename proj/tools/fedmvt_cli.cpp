// Experiment harness CLI. Talks to the core exclusively through the C API in
// fedmvt.h.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedmvt.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

int exit_code_for(fedmvt_status s) {
    switch (s) {
        case FEDMVT_OK:
            return kExitOk;
        case FEDMVT_ERR_ARGUMENT:
        case FEDMVT_ERR_PARSE:
        case FEDMVT_ERR_VALIDATION:
            return kExitValidation;
        default:
            return kExitRuntime;
    }
}

struct ConfigHandle {
    fedmvt_config* cfg = nullptr;
    ~ConfigHandle() { fedmvt_config_free(cfg); }
};

int load_config_or_fail(const std::string& path, ConfigHandle& handle) {
    fedmvt_status s = fedmvt_config_load(path.c_str(), &handle.cfg);
    if (s != FEDMVT_OK) {
        std::fprintf(stderr, "error: %s\n", fedmvt_last_error());
        return exit_code_for(s);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedMVT two-party vertical federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    int64_t seed_override = -1;

    CLI::App* run = app.add_subcommand("run", "run the configured experiment sweep");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--out-dir", out_dir, "output directory for records and CSVs");
    run->add_option("--seed-override", seed_override, "replace the config's seed list with one seed");

    CLI::App* validate = app.add_subcommand("validate", "validate a config file without running");
    validate->add_option("--config", config_path, "experiment config file")->required();

    CLI::App* synth = app.add_subcommand("synth-data", "write the configured synthetic dataset as CSV");
    synth->add_option("--config", config_path, "experiment config file")->required();
    synth->add_option("--out-dir", out_dir, "output directory for the CSV files");

    CLI11_PARSE(app, argc, argv);

    ConfigHandle handle;
    if (int rc = load_config_or_fail(config_path, handle); rc != kExitOk) return rc;

    if (validate->parsed()) {
        std::vector<char> report(16384);
        fedmvt_status s = fedmvt_config_validate(handle.cfg, report.data(), report.size());
        if (s != FEDMVT_OK) {
            std::fprintf(stderr, "invalid configuration:\n%s\n", report.data());
            return exit_code_for(s);
        }
        std::printf("ok\n");
        return kExitOk;
    }

    if (seed_override >= 0) {
        if (fedmvt_config_override_seed(handle.cfg, static_cast<uint64_t>(seed_override)) != FEDMVT_OK) {
            std::fprintf(stderr, "error: %s\n", fedmvt_last_error());
            return kExitValidation;
        }
    }

    if (synth->parsed()) {
        fedmvt_status s = fedmvt_synth_data(handle.cfg, out_dir.c_str());
        if (s != FEDMVT_OK) {
            std::fprintf(stderr, "error: %s\n", fedmvt_last_error());
            return exit_code_for(s);
        }
        std::printf("wrote %s/party_a.csv %s/party_b.csv %s/overlap.csv\n", out_dir.c_str(),
                    out_dir.c_str(), out_dir.c_str());
        return kExitOk;
    }

    // run
    {
        std::vector<char> report(16384);
        fedmvt_status s = fedmvt_config_validate(handle.cfg, report.data(), report.size());
        if (s != FEDMVT_OK) {
            std::fprintf(stderr, "invalid configuration:\n%s\n", report.data());
            return exit_code_for(s);
        }
    }
    fedmvt_result* result = nullptr;
    fedmvt_status s = fedmvt_run_experiment(handle.cfg, out_dir.c_str(), &result);
    if (s != FEDMVT_OK) {
        std::fprintf(stderr, "error: %s\n", fedmvt_last_error());
        return exit_code_for(s);
    }
    std::printf("model,overlap_size,mean_acc,std_acc,n_seeds\n");
    for (size_t i = 0; i < fedmvt_result_row_count(result); ++i) {
        const char* model = nullptr;
        int overlap = 0, n_seeds = 0;
        double mean = 0.0, sd = 0.0;
        fedmvt_result_row(result, i, &model, &overlap, &mean, &sd, &n_seeds);
        std::printf("%s,%d,%.2f,%.2f,%d\n", model, overlap, mean, sd, n_seeds);
    }
    std::printf("boundary audit: %s\n", fedmvt_result_audit_pass(result) ? "PASS" : "FAIL");
    int rc = fedmvt_result_audit_pass(result) ? kExitOk : kExitRuntime;
    fedmvt_result_free(result);
    return rc;
}
