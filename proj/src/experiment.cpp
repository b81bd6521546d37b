#include "fedmvt/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "fedmvt/rng.hpp"

namespace fedmvt {

namespace {

using nlohmann::json;

struct CellData {
    VerticalDataset train;
    EvalSplit eval;
    int features_a = 0;
    int features_b = 0;
    int classes = 0;
};

// Carve a fixed test block (data seed only), then partition the rest by the
// run seed so each seed sees a different overlap draw over the same corpus.
CellData build_synthetic_cell(const ExperimentConfig& cfg, int overlap_size, uint64_t seed) {
    auto [features, labels] = make_synthetic(cfg.synthetic);
    const int n = features.rows;
    int n_test = static_cast<int>(std::llround(cfg.test_fraction * n));
    n_test = std::min(std::max(n_test, 1), n - 2);
    const int n_train = n - n_test;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix_seed(cfg.synthetic.seed, 0x7e57ULL));
    shuffle_in_place(order, rng);

    std::vector<int> train_rows(order.begin(), order.begin() + n_train);
    std::vector<int> test_rows(order.begin() + n_train, order.end());

    Mat train_f = gather_mat_rows(features, train_rows);
    Mat train_y = gather_mat_rows(labels, train_rows);

    if (overlap_size > n_train)
        throw std::invalid_argument("overlap size " + std::to_string(overlap_size) +
                                    " exceeds training rows " + std::to_string(n_train));
    const double overlap_fraction = static_cast<double>(overlap_size) / n_train;

    CellData cell;
    cell.train = vertical_partition(train_f, train_y, cfg.synthetic.features_a, overlap_fraction,
                                    cfg.nl_fraction_a, cfg.nl_fraction_b, mix_seed(seed, 0x5B117ULL));
    Mat test_f = gather_mat_rows(features, test_rows);
    cell.eval.features_a = Mat(test_f.rows, cfg.synthetic.features_a);
    cell.eval.features_b = Mat(test_f.rows, cfg.synthetic.features_b);
    for (int r = 0; r < test_f.rows; ++r) {
        std::copy_n(test_f.row_ptr(r), cfg.synthetic.features_a, cell.eval.features_a.row_ptr(r));
        std::copy_n(test_f.row_ptr(r) + cfg.synthetic.features_a, cfg.synthetic.features_b,
                    cell.eval.features_b.row_ptr(r));
    }
    cell.eval.labels = gather_mat_rows(labels, test_rows);
    cell.features_a = cfg.synthetic.features_a;
    cell.features_b = cfg.synthetic.features_b;
    cell.classes = labels.cols;
    return cell;
}

CellData build_csv_cell(const ExperimentConfig& cfg) {
    CellData cell;
    cell.train = load_csv(cfg.csv_party_a, cfg.csv_party_b, cfg.csv_overlap_map);
    VerticalDataset test = load_csv(cfg.csv_test_party_a, cfg.csv_test_party_b, cfg.csv_test_overlap_map);
    if (test.n_overlap() == 0)
        throw ConfigError("test dataset must have overlap rows (aligned features for evaluation)");
    cell.eval = eval_split_from(test);
    cell.features_a = cell.train.features_a.cols;
    cell.features_b = cell.train.features_b.cols;
    cell.classes = cell.train.num_classes();
    if (test.num_classes() != cell.classes)
        throw ConfigError("train/test class counts differ");
    return cell;
}

std::string cell_tag(int overlap_size, uint64_t seed) {
    return "ol" + std::to_string(overlap_size) + "_seed" + std::to_string(seed);
}

void write_metrics_csv(const std::string& path, const std::vector<std::pair<std::string, const TrainOutput*>>& runs) {
    std::ofstream out(path);
    out << "model,epoch,loss_total,loss_fed,loss_a,loss_b,loss_ab_dist,loss_a_dist,loss_b_dist,"
           "loss_a_orth,loss_b_orth,pseudo_selected,acc_fa,acc_fb,acc_fab\n";
    for (const auto& [name, run] : runs) {
        for (const EpochMetrics& em : run->history) {
            const LossReport& r = em.mean_losses;
            out << name << ',' << em.epoch << ',' << r.total << ',' << r.fed << ',' << r.local_a << ','
                << r.local_b << ',' << r.dist_ab << ',' << r.dist_a << ',' << r.dist_b << ','
                << r.orth_a << ',' << r.orth_b << ',' << em.pseudo_selected << ',' << em.accuracy.fa
                << ',' << em.accuracy.fb << ',' << em.accuracy.fab << "\n";
        }
    }
}

}  // namespace

EvalSplit eval_split_from(const VerticalDataset& ds) {
    EvalSplit split;
    std::vector<int> rows_a, rows_b;
    for (auto [ia, ib] : ds.overlap_pairs) {
        rows_a.push_back(ia);
        rows_b.push_back(ib);
    }
    split.features_a = gather_mat_rows(ds.features_a, rows_a);
    split.features_b = gather_mat_rows(ds.features_b, rows_b);
    split.labels = gather_mat_rows(ds.labels_a, rows_a);
    return split;
}

namespace {

CellResult run_cell_impl(const ExperimentConfig& cfg, int overlap_size, uint64_t seed,
                         const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    CellData cell = cfg.source == DataSource::Synthetic ? build_synthetic_cell(cfg, overlap_size, seed)
                                                        : build_csv_cell(cfg);
    ModelConfig mc = cfg.model_config(cell.features_a, cell.features_b, cell.classes);
    TrainOptions opts = cfg.train_options(seed);

    TrainOutput local = train_vanilla_local(cell.train, &cell.eval, mc, opts);
    TrainOutput vfl = train_vanilla_vfl(cell.train, &cell.eval, mc, opts);
    TrainOutput fed = train_fedmvt(cell.train, &cell.eval, mc, opts);

    AuditReport fed_audit = audit_ledger(fed.ledger, fed.fingerprints);
    AuditReport vfl_audit = audit_ledger(vfl.ledger, vfl.fingerprints);

    CellResult res;
    res.overlap_size = overlap_size;
    res.seed = seed;
    res.acc_vanilla_local = local.history.empty() ? 0.0 : local.history.back().accuracy.fa;
    res.acc_vanilla_vfl = vfl.history.empty() ? 0.0 : vfl.history.back().accuracy.fab;
    res.acc_fedmvt_local = fed.history.empty() ? 0.0 : fed.history.back().accuracy.fa;
    res.acc_fedmvt_vfl = fed.history.empty() ? 0.0 : fed.history.back().accuracy.fab;
    res.audit_pass = fed_audit.pass && vfl_audit.pass;
    res.audit_summary = "fedmvt: " + fed_audit.summary() + "; vanilla-vfl: " + vfl_audit.summary();
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out_dir.empty()) return res;

    const std::string tag = cell_tag(overlap_size, seed);
    write_metrics_csv(out_dir + "/metrics_" + tag + ".csv",
                      {{"vanilla-local", &local}, {"vanilla-vfl", &vfl}, {"fedmvt", &fed}});

    json record;
    record["config"] = cfg.echo();
    record["overlap_size"] = overlap_size;
    record["seed"] = seed;
    record["final_accuracy"] = {{"vanilla-local", res.acc_vanilla_local},
                                {"vanilla-vfl", res.acc_vanilla_vfl},
                                {"fedmvt-local", res.acc_fedmvt_local},
                                {"fedmvt-vfl", res.acc_fedmvt_vfl}};
    record["audit"] = {{"pass", res.audit_pass}, {"detail", res.audit_summary}};
    record["boundary_messages"] = {{"fedmvt", fed.ledger.size()}, {"vanilla-vfl", vfl.ledger.size()},
                                   {"vanilla-local", 0}};
    record["wall_seconds"] = res.wall_seconds;
    std::ofstream(out_dir + "/record_" + tag + ".json") << record.dump(2) << "\n";
    return res;
}

}  // namespace

CellResult run_cell(const ExperimentConfig& cfg, int overlap_size, uint64_t seed) {
    return run_cell_impl(cfg, overlap_size, seed, "");
}

std::vector<AggregateRow> aggregate_cells(const std::vector<CellResult>& cells) {
    std::vector<AggregateRow> rows;
    std::vector<int> sizes;
    for (const CellResult& c : cells)
        if (std::find(sizes.begin(), sizes.end(), c.overlap_size) == sizes.end())
            sizes.push_back(c.overlap_size);
    std::sort(sizes.begin(), sizes.end());

    const std::vector<std::pair<std::string, double CellResult::*>> models = {
        {"vanilla-local", &CellResult::acc_vanilla_local},
        {"vanilla-vfl", &CellResult::acc_vanilla_vfl},
        {"fedmvt-local", &CellResult::acc_fedmvt_local},
        {"fedmvt-vfl", &CellResult::acc_fedmvt_vfl},
    };
    for (const auto& [name, member] : models) {
        for (int size : sizes) {
            std::vector<double> accs;
            for (const CellResult& c : cells)
                if (c.overlap_size == size) accs.push_back(c.*member);
            AggregateRow row;
            row.model = name;
            row.overlap_size = size;
            row.n_seeds = static_cast<int>(accs.size());
            double mean = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
            double var = 0.0;
            for (double a : accs) var += (a - mean) * (a - mean);
            row.mean_acc = mean;
            row.std_acc = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
            rows.push_back(row);
        }
    }
    return rows;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    std::vector<std::string> errs = cfg.validate();
    if (!errs.empty()) {
        std::string msg = "invalid configuration:";
        for (const std::string& e : errs) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    std::filesystem::create_directories(out_dir);

    std::vector<int> sizes = cfg.overlap_sizes;
    if (cfg.source == DataSource::Csv) sizes = {-1};  // resolved from the overlap map below

    struct CellKey {
        int size;
        uint64_t seed;
    };
    std::vector<CellKey> keys;
    for (int size : sizes)
        for (uint64_t seed : cfg.seeds) keys.push_back({size, seed});

    // Resolve csv overlap size once for the record naming.
    if (cfg.source == DataSource::Csv) {
        VerticalDataset probe = load_csv(cfg.csv_party_a, cfg.csv_party_b, cfg.csv_overlap_map);
        for (CellKey& k : keys) k.size = probe.n_overlap();
    }

    const size_t workers = std::min<size_t>(keys.size(), std::max(1u, std::thread::hardware_concurrency()));
    ExperimentResult result;
    result.cells.resize(keys.size());
    std::vector<std::string> failures(keys.size());
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (size_t i = next.fetch_add(1); i < keys.size(); i = next.fetch_add(1)) {
                try {
                    result.cells[i] = run_cell_impl(cfg, keys[i].size, keys[i].seed, out_dir);
                } catch (const std::exception& e) {
                    failures[i] = e.what();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();

    std::string failure_msg;
    for (size_t i = 0; i < failures.size(); ++i)
        if (!failures[i].empty())
            failure_msg += "cell " + cell_tag(keys[i].size, keys[i].seed) + ": " + failures[i] + "\n";
    if (!failure_msg.empty())
        throw std::runtime_error("experiment cells failed (partial records kept):\n" + failure_msg);

    result.aggregate = aggregate_cells(result.cells);
    std::ofstream agg(out_dir + "/aggregate.csv");
    agg << "model,overlap_size,mean_acc,std_acc,n_seeds\n";
    for (const AggregateRow& r : result.aggregate)
        agg << r.model << ',' << r.overlap_size << ',' << r.mean_acc << ',' << r.std_acc << ','
            << r.n_seeds << "\n";
    return result;
}

void write_synthetic_csv(const ExperimentConfig& cfg, const std::string& out_dir) {
    if (cfg.source != DataSource::Synthetic)
        throw ConfigError("synth-data requires data.source = synthetic");
    std::filesystem::create_directories(out_dir);
    auto [features, labels] = make_synthetic(cfg.synthetic);
    const int size = cfg.overlap_sizes.front();
    if (size > cfg.synthetic.n) throw ConfigError("overlap size exceeds dataset size");
    VerticalDataset ds = vertical_partition(features, labels, cfg.synthetic.features_a,
                                            static_cast<double>(size) / cfg.synthetic.n,
                                            cfg.nl_fraction_a, cfg.nl_fraction_b,
                                            mix_seed(cfg.seeds.front(), 0x5B117ULL));
    write_csv(ds, out_dir + "/party_a.csv", out_dir + "/party_b.csv", out_dir + "/overlap.csv");
}

}  // namespace fedmvt
