// Command-line front end: phantom generation, metric evaluation, label
// degradation and the benchmark sweep driver.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "vesselbench/bench.hpp"
#include "vesselbench/degrade.hpp"
#include "vesselbench/metrics.hpp"
#include "vesselbench/phantom.hpp"
#include "vesselbench/volume.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_phantom_generate(const std::string& config_path, const std::string& out_dir, int count,
                         const std::string& stem) {
  const vb::PhantomConfig base = vb::phantom_config_from_json_file(config_path);
  for (int i = 0; i < count; ++i) {
    vb::PhantomConfig cfg = base;
    if (count > 1) cfg.rng_seed = vb::derive_seed(base.rng_seed, "phantom-sample", i);
    const vb::PhantomSample sample = vb::generate_phantom(cfg);
    const std::string name = count > 1 ? stem + "_" + std::to_string(i) : stem;
    vb::write_phantom(sample, cfg, out_dir, name);
    std::cout << "wrote " << (fs::path(out_dir) / name).string() << "_{image,label,centerline}"
              << "\n";
  }
  return 0;
}

int cmd_metrics_eval(const std::string& pred_path, const std::string& gt_path) {
  const vb::LabelVolume pred = vb::read_label(pred_path);
  const vb::LabelVolume gt = vb::read_label(gt_path);
  const vb::ClDiceReport report = vb::cl_dice(pred, gt);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_degrade(const std::string& kind, int level, const std::string& in_dir,
                const std::string& out_dir, std::uint64_t seed) {
  const vb::DegradationSpec spec = vb::degradation_from_name(kind, level, seed);
  fs::create_directories(out_dir);

  std::vector<fs::path> inputs;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.ends_with(".nii") || name.ends_with(".nii.gz") || name.ends_with(".bin"))
      inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  if (inputs.empty()) {
    std::cerr << "no label volumes found in " << in_dir << "\n";
    return 1;
  }

  std::uint64_t file_index = 0;
  for (const fs::path& in_path : inputs) {
    const vb::LabelVolume label = vb::read_label(in_path.string());
    vb::DegradationSpec vol_spec = spec;
    vol_spec.rng_seed = vb::derive_seed(seed, in_path.filename().string(), file_index++);
    const vb::LabelVolume out = vb::apply_degradation(label, vol_spec);
    const fs::path out_path = fs::path(out_dir) / in_path.filename();
    vb::write_volume(out, out_path.string());

    nlohmann::json prov;
    prov["kind"] = vol_spec.name();
    prov["level"] = vol_spec.level;
    prov["rng_seed"] = vol_spec.rng_seed;
    prov["structuring_element"] = "digital ball radius 1 (6-neighborhood cross)";
    prov["prune_fractions"] = {0.15, 0.35, 0.55};
    prov["source"] = in_path.filename().string();
    std::string stem = in_path.filename().string();
    if (stem.ends_with(".nii.gz")) stem.resize(stem.size() - 7);
    else if (stem.ends_with(".nii") || stem.ends_with(".bin")) stem.resize(stem.size() - 4);
    std::ofstream pf(fs::path(out_dir) / (stem + ".provenance.json"));
    pf << prov.dump(2) << "\n";
    std::cout << "wrote " << out_path.string() << "\n";
  }
  return 0;
}

std::string resolve_runs_dir(const std::string& flag_value, const std::string& spec_value) {
  if (!flag_value.empty()) return flag_value;
  if (!spec_value.empty()) return spec_value;
  if (const char* env = std::getenv("BENCH_RUNS_DIR")) return env;
  return "runs";
}

int cmd_bench_run(const std::string& spec_path, const std::string& runs_flag) {
  vb::ExperimentSpec spec = vb::ExperimentSpec::from_json_file(spec_path);
  spec.runs_dir = resolve_runs_dir(runs_flag, spec.runs_dir);
  const auto records = vb::run_experiment(spec);
  std::cout << "completed " << records.size() << " cells -> "
            << (fs::path(spec.runs_dir) / "results.csv").string() << "\n";
  return 0;
}

int cmd_bench_aggregate(const std::string& runs_flag, const std::string& out_path) {
  const std::string runs = resolve_runs_dir(runs_flag, "");
  const auto records = vb::read_results_csv((fs::path(runs) / "results.csv").string());
  const auto summary = vb::aggregate(records);
  const std::string out = out_path.empty() ? (fs::path(runs) / "summary.csv").string() : out_path;
  vb::write_summary_csv(out, summary);
  std::cout << "wrote " << out << " (" << summary.size() << " groups)\n";
  return 0;
}

int cmd_bench_plot(const std::string& summary_path, const std::string& kind,
                   const std::string& out_dir) {
  const auto summary = vb::read_summary_csv(summary_path);
  const vb::PlotKind pk = kind == "boxes" ? vb::PlotKind::boxes : vb::PlotKind::lines;
  const auto files = vb::plot(summary, pk, out_dir);
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised 3D vessel segmentation benchmark"};
  app.require_subcommand(1);

  // phantom generate
  auto* phantom = app.add_subcommand("phantom", "Synthetic vascular phantoms");
  phantom->require_subcommand(1);
  auto* generate = phantom->add_subcommand("generate", "Generate image/label/centerline triples");
  std::string ph_config, ph_out = ".", ph_stem = "phantom";
  int ph_count = 1;
  generate->add_option("--config", ph_config, "Phantom config JSON")->required();
  generate->add_option("--out", ph_out, "Output directory")->required();
  generate->add_option("--count", ph_count, "Number of samples (seeds derived per sample)");
  generate->add_option("--stem", ph_stem, "Output file stem");

  // metrics eval
  auto* metrics = app.add_subcommand("metrics", "Evaluation metrics");
  metrics->require_subcommand(1);
  auto* eval = metrics->add_subcommand("eval", "Dice + clDice of a prediction against ground truth");
  std::string m_pred, m_gt;
  eval->add_option("--pred", m_pred, "Predicted mask")->required();
  eval->add_option("--gt", m_gt, "Ground-truth mask")->required();

  // degrade
  auto* degrade = app.add_subcommand("degrade", "Simulate annotation imperfections");
  std::string d_kind, d_in, d_out;
  int d_level = 0;
  std::uint64_t d_seed = 0;
  degrade->add_option("--kind", d_kind, "erosion | dilation | removed")->required();
  degrade->add_option("--level", d_level, "Severity 1..3 (removed only)");
  degrade->add_option("--in", d_in, "Directory of label volumes")->required();
  degrade->add_option("--out", d_out, "Output directory")->required();
  degrade->add_option("--seed", d_seed, "Tie-break seed (removed only)");

  // bench run / aggregate / plot
  auto* bench = app.add_subcommand("bench", "Experiment sweeps");
  bench->require_subcommand(1);
  auto* run = bench->add_subcommand("run", "Run every cell of an experiment spec");
  std::string b_spec, b_runs;
  run->add_option("--spec", b_spec, "Experiment spec JSON")->required();
  run->add_option("--runs", b_runs, "Results root (default: spec, then $BENCH_RUNS_DIR, then ./runs)");
  auto* agg = bench->add_subcommand("aggregate", "Group results into a summary CSV");
  std::string a_runs, a_out;
  agg->add_option("--runs", a_runs, "Results root");
  agg->add_option("--out", a_out, "Summary CSV path");
  auto* plot_cmd = bench->add_subcommand("plot", "Render SVG charts from a summary CSV");
  std::string p_summary, p_kind = "lines", p_out = ".";
  plot_cmd->add_option("--summary", p_summary, "Summary CSV")->required();
  plot_cmd->add_option("--kind", p_kind, "lines | boxes");
  plot_cmd->add_option("--out", p_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_phantom_generate(ph_config, ph_out, ph_count, ph_stem);
    if (eval->parsed()) return cmd_metrics_eval(m_pred, m_gt);
    if (degrade->parsed()) return cmd_degrade(d_kind, d_level, d_in, d_out, d_seed);
    if (run->parsed()) return cmd_bench_run(b_spec, b_runs);
    if (agg->parsed()) return cmd_bench_aggregate(a_runs, a_out);
    if (plot_cmd->parsed()) return cmd_bench_plot(p_summary, p_kind, p_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
