// Exercises the shared library exactly as an external C client would.
#include <cassert>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "fedmvt.h"

namespace {

int g_failures = 0;

void check(bool ok, const char* what) {
    if (ok) {
        std::printf("ok   %s\n", what);
    } else {
        std::printf("FAIL %s (last error: %s)\n", what, fedmvt_last_error());
        ++g_failures;
    }
}

std::string write_temp_config(const std::string& name, const std::string& body) {
    auto dir = std::filesystem::temp_directory_path() / "fedmvt_capi";
    std::filesystem::create_directories(dir);
    auto path = dir / name;
    std::ofstream(path) << body;
    return path.string();
}

}  // namespace

int main() {
    check(std::strcmp(fedmvt_version(), "") != 0, "version string present");

    // Argument validation.
    fedmvt_config* cfg = nullptr;
    check(fedmvt_config_load(nullptr, &cfg) == FEDMVT_ERR_ARGUMENT, "null path rejected");
    check(fedmvt_config_load("/nonexistent/cfg.txt", &cfg) == FEDMVT_ERR_PARSE,
          "missing file is a parse error");
    check(std::strlen(fedmvt_last_error()) > 0, "last error populated");

    // Unknown keys are parse failures.
    std::string bad_key = write_temp_config("bad_key.cfg", "no.such.key = 1\n");
    check(fedmvt_config_load(bad_key.c_str(), &cfg) == FEDMVT_ERR_PARSE, "unknown key rejected");

    // A parseable but invalid config fails validation with a report.
    std::string invalid = write_temp_config("invalid.cfg",
                                            "data.source = synthetic\n"
                                            "pseudo.threshold = 1.5\n"
                                            "train.lr = -2\n");
    check(fedmvt_config_load(invalid.c_str(), &cfg) == FEDMVT_OK, "invalid config still parses");
    char report[4096];
    check(fedmvt_config_validate(cfg, report, sizeof(report)) == FEDMVT_ERR_VALIDATION,
          "validation fails");
    check(std::strstr(report, "threshold") != nullptr, "report names the threshold");
    check(std::strstr(report, "lr") != nullptr, "report names the learning rate");
    fedmvt_config_free(cfg);
    cfg = nullptr;

    // A tiny real experiment through the C surface.
    std::string good = write_temp_config("good.cfg",
                                         "data.source = synthetic\n"
                                         "data.synthetic.n = 48\n"
                                         "data.synthetic.features_a = 4\n"
                                         "data.synthetic.features_b = 4\n"
                                         "data.synthetic.classes = 2\n"
                                         "data.synthetic.class_sep = 3\n"
                                         "model.hidden_units = 5\n"
                                         "model.rep_dim_a = 3\n"
                                         "model.rep_dim_b = 3\n"
                                         "split.overlap_sizes = 6\n"
                                         "train.epochs = 2\n"
                                         "train.batch_ol = 4\n"
                                         "seeds = 1,2\n");
    check(fedmvt_config_load(good.c_str(), &cfg) == FEDMVT_OK, "good config loads");
    check(fedmvt_config_validate(cfg, report, sizeof(report)) == FEDMVT_OK, "good config validates");
    check(std::strcmp(report, "ok") == 0, "validation report says ok");

    auto out_dir = std::filesystem::temp_directory_path() / "fedmvt_capi" / "run";
    std::filesystem::remove_all(out_dir);
    fedmvt_result* result = nullptr;
    check(fedmvt_run_experiment(cfg, out_dir.string().c_str(), &result) == FEDMVT_OK,
          "experiment runs");
    check(fedmvt_result_row_count(result) == 4, "aggregate has one row per model");
    bool saw_fedmvt = false;
    for (size_t i = 0; i < fedmvt_result_row_count(result); ++i) {
        const char* model = nullptr;
        int overlap = 0, n_seeds = 0;
        double mean = 0.0, sd = 0.0;
        check(fedmvt_result_row(result, i, &model, &overlap, &mean, &sd, &n_seeds) == FEDMVT_OK,
              "row fetch");
        saw_fedmvt = saw_fedmvt || std::string(model) == "fedmvt-vfl";
        check(overlap == 6 && n_seeds == 2 && mean >= 0.0 && mean <= 100.0, "row values sane");
    }
    check(saw_fedmvt, "fedmvt-vfl row present");
    check(fedmvt_result_audit_pass(result) == 1, "boundary audit passes");
    check(fedmvt_result_row(result, 99, nullptr, nullptr, nullptr, nullptr, nullptr) ==
              FEDMVT_ERR_ARGUMENT,
          "out-of-range row rejected");
    check(std::filesystem::exists(out_dir / "aggregate.csv"), "aggregate.csv written");
    check(std::filesystem::exists(out_dir / "record_ol6_seed1.json"), "record written");
    fedmvt_result_free(result);

    // Seed override narrows the sweep to one seed.
    check(fedmvt_config_override_seed(cfg, 7) == FEDMVT_OK, "seed override");
    auto out_dir2 = std::filesystem::temp_directory_path() / "fedmvt_capi" / "run2";
    std::filesystem::remove_all(out_dir2);
    result = nullptr;
    check(fedmvt_run_experiment(cfg, out_dir2.string().c_str(), &result) == FEDMVT_OK,
          "override run succeeds");
    const char* model = nullptr;
    int overlap = 0, n_seeds = 0;
    double mean = 0.0, sd = 0.0;
    fedmvt_result_row(result, 0, &model, &overlap, &mean, &sd, &n_seeds);
    check(n_seeds == 1, "single seed after override");
    fedmvt_result_free(result);

    // Synthetic CSV export.
    auto synth_dir = std::filesystem::temp_directory_path() / "fedmvt_capi" / "synth";
    std::filesystem::remove_all(synth_dir);
    check(fedmvt_synth_data(cfg, synth_dir.string().c_str()) == FEDMVT_OK, "synth-data");
    check(std::filesystem::exists(synth_dir / "party_a.csv") &&
              std::filesystem::exists(synth_dir / "party_b.csv") &&
              std::filesystem::exists(synth_dir / "overlap.csv"),
          "synth csv files exist");
    fedmvt_config_free(cfg);

    if (g_failures == 0) {
        std::printf("all C API checks passed\n");
        return 0;
    }
    std::printf("%d C API checks failed\n", g_failures);
    return 1;
}
