#include "fedmvt.h"

#include <cstring>
#include <string>

#include "fedmvt/config.hpp"
#include "fedmvt/data.hpp"
#include "fedmvt/experiment.hpp"

using namespace fedmvt;

struct fedmvt_config {
    ExperimentConfig cfg;
};

struct fedmvt_result {
    ExperimentResult res;
};

namespace {

thread_local std::string g_last_error;

fedmvt_status fail(fedmvt_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
fedmvt_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        return fail(FEDMVT_ERR_VALIDATION, e.what());
    } catch (const ParseError& e) {
        return fail(FEDMVT_ERR_PARSE, e.what());
    } catch (const std::invalid_argument& e) {
        return fail(FEDMVT_ERR_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(FEDMVT_ERR_RUNTIME, e.what());
    }
}

void copy_out(char* dst, size_t len, const std::string& src) {
    if (!dst || len == 0) return;
    size_t n = std::min(len - 1, src.size());
    std::memcpy(dst, src.data(), n);
    dst[n] = '\0';
}

}  // namespace

extern "C" {

const char* fedmvt_version(void) { return "0.1.0"; }

const char* fedmvt_last_error(void) { return g_last_error.c_str(); }

fedmvt_status fedmvt_config_load(const char* path, fedmvt_config** out) {
    if (!path || !out) return fail(FEDMVT_ERR_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&]() -> fedmvt_status {
        std::vector<std::string> errors;
        ExperimentConfig cfg = load_config(path, errors);
        if (!errors.empty()) {
            std::string msg;
            for (const std::string& e : errors) msg += (msg.empty() ? "" : "; ") + e;
            return fail(FEDMVT_ERR_PARSE, msg);
        }
        *out = new fedmvt_config{std::move(cfg)};
        return FEDMVT_OK;
    });
}

void fedmvt_config_free(fedmvt_config* cfg) { delete cfg; }

fedmvt_status fedmvt_config_validate(const fedmvt_config* cfg, char* report, size_t report_len) {
    if (!cfg) return fail(FEDMVT_ERR_ARGUMENT, "null config");
    std::vector<std::string> errs = cfg->cfg.validate();
    if (errs.empty()) {
        copy_out(report, report_len, "ok");
        return FEDMVT_OK;
    }
    std::string msg;
    for (const std::string& e : errs) msg += (msg.empty() ? "" : "\n") + e;
    copy_out(report, report_len, msg);
    return fail(FEDMVT_ERR_VALIDATION, msg);
}

fedmvt_status fedmvt_config_override_seed(fedmvt_config* cfg, uint64_t seed) {
    if (!cfg) return fail(FEDMVT_ERR_ARGUMENT, "null config");
    cfg->cfg.seeds = {seed};
    return FEDMVT_OK;
}

fedmvt_status fedmvt_run_experiment(const fedmvt_config* cfg, const char* out_dir,
                                    fedmvt_result** out) {
    if (!cfg || !out_dir || !out) return fail(FEDMVT_ERR_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&]() -> fedmvt_status {
        ExperimentResult res = run_experiment(cfg->cfg, out_dir);
        *out = new fedmvt_result{std::move(res)};
        return FEDMVT_OK;
    });
}

void fedmvt_result_free(fedmvt_result* result) { delete result; }

size_t fedmvt_result_row_count(const fedmvt_result* result) {
    return result ? result->res.aggregate.size() : 0;
}

fedmvt_status fedmvt_result_row(const fedmvt_result* result, size_t index, const char** model,
                                int* overlap_size, double* mean_acc, double* std_acc, int* n_seeds) {
    if (!result || index >= result->res.aggregate.size())
        return fail(FEDMVT_ERR_ARGUMENT, "row index out of range");
    const AggregateRow& row = result->res.aggregate[index];
    if (model) *model = row.model.c_str();
    if (overlap_size) *overlap_size = row.overlap_size;
    if (mean_acc) *mean_acc = row.mean_acc;
    if (std_acc) *std_acc = row.std_acc;
    if (n_seeds) *n_seeds = row.n_seeds;
    return FEDMVT_OK;
}

int fedmvt_result_audit_pass(const fedmvt_result* result) {
    if (!result) return 0;
    for (const CellResult& c : result->res.cells)
        if (!c.audit_pass) return 0;
    return 1;
}

fedmvt_status fedmvt_synth_data(const fedmvt_config* cfg, const char* out_dir) {
    if (!cfg || !out_dir) return fail(FEDMVT_ERR_ARGUMENT, "null argument");
    return guarded([&]() -> fedmvt_status {
        write_synthetic_csv(cfg->cfg, out_dir);
        return FEDMVT_OK;
    });
}

}  // extern "C"
