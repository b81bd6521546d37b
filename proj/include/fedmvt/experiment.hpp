#pragma once

#include <string>
#include <vector>

#include "fedmvt/config.hpp"

namespace fedmvt {

struct CellResult {
    int overlap_size = 0;
    uint64_t seed = 0;
    double acc_vanilla_local = 0.0;
    double acc_vanilla_vfl = 0.0;
    double acc_fedmvt_local = 0.0;
    double acc_fedmvt_vfl = 0.0;
    bool audit_pass = false;
    std::string audit_summary;
    double wall_seconds = 0.0;
};

struct AggregateRow {
    std::string model;
    int overlap_size = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    int n_seeds = 0;
};

struct ExperimentResult {
    std::vector<CellResult> cells;
    std::vector<AggregateRow> aggregate;
};

/// Train + evaluate all four models for one dataset cell.
CellResult run_cell(const ExperimentConfig& cfg, int overlap_size, uint64_t seed);

/// Full sweep: one record + metrics CSV per (overlap size, seed) cell, plus
/// aggregate.csv. Cells run in parallel; partial outputs survive a mid-run
/// failure.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

std::vector<AggregateRow> aggregate_cells(const std::vector<CellResult>& cells);

/// Materializes the configured synthetic dataset as the three CSV files
/// (party_a.csv, party_b.csv, overlap.csv) under out_dir.
void write_synthetic_csv(const ExperimentConfig& cfg, const std::string& out_dir);

/// Aligned evaluation rows from a fully-overlapping dataset.
EvalSplit eval_split_from(const VerticalDataset& ds);

}  // namespace fedmvt
