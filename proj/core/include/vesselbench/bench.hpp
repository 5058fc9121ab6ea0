#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vesselbench/degrade.hpp"
#include "vesselbench/phantom.hpp"
#include "vesselbench/train.hpp"

namespace vb {

enum class Protocol { composition_sweep, seed_sweep, degradation_sweep };

Protocol protocol_from_name(const std::string& name);
std::string protocol_name(Protocol p);

/// Deterministic pool of generated phantoms: train volumes and test volumes
/// get disjoint per-volume seeds derived from pool_seed.
struct PhantomPoolSpec {
  PhantomConfig base;
  int train_volumes = 20;
  int test_volumes = 5;
  std::uint64_t pool_seed = 0;
  // Per-volume uniform jitter around the base geometry/appearance, so a
  // small labeled subset genuinely under-covers the pool.
  double radius_jitter = 0.0;
  double intensity_jitter = 0.0;
  double tortuosity_jitter = 0.0;
};

/// Either a directory (images/<id>.nii.gz, labels/<id>.nii.gz, split.json
/// with "labeled" / "unlabeled" / "test" id lists) or a phantom pool.
struct DatasetSource {
  std::string path;  // empty means phantom
  PhantomPoolSpec phantom;
};

struct ExperimentSpec {
  Protocol protocol = Protocol::composition_sweep;
  std::vector<Method> methods;
  std::vector<std::pair<int, int>> compositions;  // (num labeled, num unlabeled)
  std::vector<std::uint64_t> seeds;
  std::vector<DegradationSpec> degradations;  // empty = reference only
  DatasetSource dataset;
  TrainConfig base_train;
  std::string runs_dir;

  static ExperimentSpec from_json_file(const std::string& path);
  static ExperimentSpec from_json_text(const std::string& text);
  std::string to_json() const;
};

struct VolumeMetrics {
  std::string volume_id;
  double dsc = 0, cldice = 0, tprec = 0, tsens = 0;
};

struct ResultRecord {
  std::string cell_key;
  std::string protocol;
  Method method = Method::supervised;
  int num_labeled = 0;
  int num_unlabeled = 0;
  std::uint64_t data_seed = 0;
  std::string degradation = "reference";
  std::vector<VolumeMetrics> per_volume;
  double mean_dsc = 0, std_dsc = 0;
  double mean_cldice = 0, std_cldice = 0;
  double mean_tprec = 0, mean_tsens = 0;
};

/// Trains and evaluates every (method x composition x seed x degradation)
/// cell. Completed cells found in <runs_dir>/results.csv are skipped, so
/// re-running is idempotent; each finished cell appends its per-test-volume
/// rows under an advisory lock and snapshots its config under cells/<key>/.
std::vector<ResultRecord> run_experiment(const ExperimentSpec& spec);

/// Loads result rows back into records (one per cell, rows grouped by key).
std::vector<ResultRecord> read_results_csv(const std::string& path);

struct SummaryRow {
  std::string protocol, method;
  int num_labeled = 0, num_unlabeled = 0;
  std::string degradation;
  int n = 0;  // records aggregated
  double mean_dsc = 0, std_dsc = 0, min_dsc = 0, q25_dsc = 0, median_dsc = 0, q75_dsc = 0,
         max_dsc = 0;
  double mean_cldice = 0, std_cldice = 0, min_cldice = 0, q25_cldice = 0, median_cldice = 0,
         q75_cldice = 0, max_cldice = 0;
};

/// Grouped means/stds (population std) per (method, composition,
/// degradation), deterministic row order.
std::vector<SummaryRow> aggregate(const std::vector<ResultRecord>& records);

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::string& path);

/// One formatted CSV line per summary row; shared by the summary writer and
/// the plot value dumps so both emit byte-identical rows.
std::string summary_row_csv(const SummaryRow& row);
std::string summary_csv_header();

enum class PlotKind { lines, boxes };

/// Renders one SVG per metric (DSC, clDice) plus a CSV of exactly the rows
/// plotted. Returns the paths written.
std::vector<std::string> plot(const std::vector<SummaryRow>& summary, PlotKind kind,
                              const std::string& out_dir);

}  // namespace vb
