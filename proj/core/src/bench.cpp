#include "vesselbench/bench.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "vesselbench/metrics.hpp"

namespace vb {

namespace fs = std::filesystem;
using json = nlohmann::json;

Protocol protocol_from_name(const std::string& name) {
  if (name == "composition_sweep") return Protocol::composition_sweep;
  if (name == "seed_sweep") return Protocol::seed_sweep;
  if (name == "degradation_sweep") return Protocol::degradation_sweep;
  throw std::runtime_error("unknown protocol '" + name + "'");
}

std::string protocol_name(Protocol p) {
  switch (p) {
    case Protocol::composition_sweep: return "composition_sweep";
    case Protocol::seed_sweep: return "seed_sweep";
    case Protocol::degradation_sweep: return "degradation_sweep";
  }
  return "unknown";
}

namespace {

std::uint64_t fnv64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

DegradationSpec degradation_from_string(const std::string& text, std::uint64_t seed) {
  if (text == "removed1") return degradation_from_name("removed", 1, seed);
  if (text == "removed2") return degradation_from_name("removed", 2, seed);
  if (text == "removed3") return degradation_from_name("removed", 3, seed);
  return degradation_from_name(text, 0, seed);
}

struct MaterializedDataset {
  std::vector<Volume3D> train_images;   // min-max normalized
  std::vector<LabelVolume> train_labels;
  std::vector<std::string> train_ids;
  std::vector<int> labeled_pool;        // indices with usable labels
  std::vector<int> unlabeled_pool;      // path mode: ids without labels
  bool pool_is_split = false;           // true when labeled/unlabeled pools are fixed

  std::vector<Volume3D> test_images;
  std::vector<LabelVolume> test_labels;
  std::vector<std::string> test_ids;
};

PhantomConfig pool_volume_config(const PhantomPoolSpec& pool, const char* tag, int index) {
  PhantomConfig cfg = pool.base;
  cfg.rng_seed = derive_seed(pool.pool_seed, tag, static_cast<std::uint64_t>(index));
  Rng jitter(derive_seed(cfg.rng_seed, "pool-jitter"));
  if (pool.radius_jitter > 0)
    cfg.root_radius = std::max(1.0, cfg.root_radius + jitter.uniform(-pool.radius_jitter,
                                                                     pool.radius_jitter));
  if (pool.intensity_jitter > 0)
    cfg.vessel_intensity += jitter.uniform(-pool.intensity_jitter, pool.intensity_jitter);
  if (pool.tortuosity_jitter > 0)
    cfg.tortuosity = std::max(0.0, cfg.tortuosity + jitter.uniform(-pool.tortuosity_jitter,
                                                                   pool.tortuosity_jitter));
  return cfg;
}

MaterializedDataset materialize(const DatasetSource& src) {
  MaterializedDataset d;
  if (src.path.empty()) {
    const PhantomPoolSpec& pool = src.phantom;
    if (pool.train_volumes < 1 || pool.test_volumes < 1)
      throw std::runtime_error("phantom pool needs at least one train and one test volume");
    for (int i = 0; i < pool.train_volumes; ++i) {
      PhantomSample s = generate_phantom(pool_volume_config(pool, "train-volume", i));
      d.train_images.push_back(normalize_minmax(s.image));
      d.train_labels.push_back(std::move(s.label));
      d.train_ids.push_back("train_" + std::to_string(i));
      d.labeled_pool.push_back(i);
    }
    for (int i = 0; i < pool.test_volumes; ++i) {
      PhantomSample s = generate_phantom(pool_volume_config(pool, "test-volume", i));
      d.test_images.push_back(std::move(s.image));
      d.test_labels.push_back(std::move(s.label));
      d.test_ids.push_back("test_" + std::to_string(i));
    }
    return d;
  }

  const fs::path root(src.path);
  std::ifstream sf(root / "split.json");
  if (!sf) throw std::runtime_error("cannot open split file: " + (root / "split.json").string());
  json split;
  sf >> split;

  auto find_volume = [&](const std::string& dir, const std::string& id) {
    for (const char* ext : {".nii.gz", ".nii", ".json"}) {
      const fs::path p = root / dir / (id + ext);
      if (fs::exists(p)) return p.string();
    }
    throw std::runtime_error("missing volume for id '" + id + "' under " + (root / dir).string());
  };

  d.pool_is_split = true;
  int idx = 0;
  for (const auto& id : split.at("labeled").get<std::vector<std::string>>()) {
    d.train_images.push_back(normalize_minmax(read_volume(find_volume("images", id))));
    d.train_labels.push_back(read_label(find_volume("labels", id)));
    d.train_ids.push_back(id);
    d.labeled_pool.push_back(idx++);
  }
  for (const auto& id : split.at("unlabeled").get<std::vector<std::string>>()) {
    d.train_images.push_back(normalize_minmax(read_volume(find_volume("images", id))));
    d.train_labels.emplace_back();
    d.train_ids.push_back(id);
    d.unlabeled_pool.push_back(idx++);
  }
  for (const auto& id : split.at("test").get<std::vector<std::string>>()) {
    d.test_images.push_back(read_volume(find_volume("images", id)));
    d.test_labels.push_back(read_label(find_volume("labels", id)));
    d.test_ids.push_back(id);
  }
  return d;
}

struct Cell {
  Method method;
  int num_labeled, num_unlabeled;
  std::uint64_t data_seed;
  DegradationSpec degradation;
};

std::string cell_canonical(const ExperimentSpec& spec, const Cell& c,
                           const std::string& config_digest) {
  std::ostringstream os;
  os << protocol_name(spec.protocol) << '|' << method_name(c.method) << '|' << c.num_labeled << '|'
     << c.num_unlabeled << '|' << c.data_seed << '|' << c.degradation.name() << '|'
     << config_digest;
  return os.str();
}

std::string dataset_digest(const DatasetSource& src) {
  if (!src.path.empty()) return "path:" + src.path;
  std::ostringstream os;
  os << "phantom:" << phantom_config_to_json(src.phantom.base) << ":" << src.phantom.train_volumes
     << ":" << src.phantom.test_volumes << ":" << src.phantom.pool_seed << ":"
     << src.phantom.radius_jitter << ":" << src.phantom.intensity_jitter << ":"
     << src.phantom.tortuosity_jitter;
  return os.str();
}

void append_rows_locked(const std::string& path, const std::string& header,
                        const std::string& rows) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw std::runtime_error("cannot open results file: " + path);
  if (::flock(fd, LOCK_EX) != 0) {
    ::close(fd);
    throw std::runtime_error("cannot lock results file: " + path);
  }
  std::string payload;
  if (::lseek(fd, 0, SEEK_END) == 0) payload = header;
  payload += rows;
  const ssize_t written = ::write(fd, payload.data(), payload.size());
  ::flock(fd, LOCK_UN);
  ::close(fd);
  if (written != static_cast<ssize_t>(payload.size()))
    throw std::runtime_error("short write to results file: " + path);
}

constexpr const char* RESULTS_HEADER =
    "cell_key,protocol,method,num_labeled,num_unlabeled,data_seed,degradation,volume_id,dsc,"
    "cldice,tprec,tsens\n";

void finalize_stats(ResultRecord& r) {
  const auto stats = [&](auto getter, double& mean, double& stdev) {
    double m = 0;
    for (const auto& v : r.per_volume) m += getter(v);
    m /= static_cast<double>(r.per_volume.size());
    double var = 0;
    for (const auto& v : r.per_volume) {
      const double dd = getter(v) - m;
      var += dd * dd;
    }
    mean = m;
    stdev = std::sqrt(var / static_cast<double>(r.per_volume.size()));
  };
  stats([](const VolumeMetrics& v) { return v.dsc; }, r.mean_dsc, r.std_dsc);
  stats([](const VolumeMetrics& v) { return v.cldice; }, r.mean_cldice, r.std_cldice);
  double dummy;
  stats([](const VolumeMetrics& v) { return v.tprec; }, r.mean_tprec, dummy);
  stats([](const VolumeMetrics& v) { return v.tsens; }, r.mean_tsens, dummy);
}

}  // namespace

// ---- spec JSON ----

ExperimentSpec ExperimentSpec::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("experiment spec: invalid JSON: ") + e.what());
  }
  ExperimentSpec s;
  s.protocol = protocol_from_name(j.at("protocol").get<std::string>());
  for (const auto& m : j.at("methods")) s.methods.push_back(method_from_name(m.get<std::string>()));
  for (const auto& c : j.at("compositions")) {
    const auto pair = c.get<std::vector<int>>();
    if (pair.size() != 2) throw std::runtime_error("experiment spec: composition must be [labeled, unlabeled]");
    s.compositions.emplace_back(pair[0], pair[1]);
  }
  for (const auto& v : j.at("seeds")) s.seeds.push_back(v.get<std::uint64_t>());
  const std::uint64_t degradation_seed = j.value("degradation_seed", 0ULL);
  if (j.contains("degradations"))
    for (const auto& dgt : j["degradations"])
      s.degradations.push_back(degradation_from_string(dgt.get<std::string>(), degradation_seed));
  if (s.degradations.empty()) s.degradations.push_back(DegradationSpec{});

  const auto& ds = j.at("dataset");
  if (ds.contains("path")) {
    s.dataset.path = ds["path"].get<std::string>();
  } else {
    const auto& ph = ds.at("phantom");
    s.dataset.phantom.base = phantom_config_from_json_text(ph.dump());
    s.dataset.phantom.train_volumes = ph.value("train_volumes", 20);
    s.dataset.phantom.test_volumes = ph.value("test_volumes", 5);
    s.dataset.phantom.pool_seed = ph.value("pool_seed", 0ULL);
    s.dataset.phantom.radius_jitter = ph.value("radius_jitter", 0.0);
    s.dataset.phantom.intensity_jitter = ph.value("intensity_jitter", 0.0);
    s.dataset.phantom.tortuosity_jitter = ph.value("tortuosity_jitter", 0.0);
  }
  s.base_train = j.contains("train") ? TrainConfig::from_json_text(j["train"].dump()) : TrainConfig{};
  s.runs_dir = j.value("runs_dir", std::string());

  if (s.methods.empty() || s.compositions.empty() || s.seeds.empty())
    throw std::runtime_error("experiment spec: methods, compositions and seeds must be non-empty");
  if (s.protocol == Protocol::seed_sweep && s.seeds.size() < 2)
    throw std::runtime_error("experiment spec: seed_sweep needs at least 2 seeds");
  return s;
}

ExperimentSpec ExperimentSpec::from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string ExperimentSpec::to_json() const {
  json j;
  j["protocol"] = protocol_name(protocol);
  json methods = json::array();
  for (const Method m : this->methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  json comps = json::array();
  for (const auto& [l, u] : compositions) comps.push_back({l, u});
  j["compositions"] = comps;
  j["seeds"] = seeds;
  json degs = json::array();
  for (const auto& d : degradations) degs.push_back(d.name());
  j["degradations"] = degs;
  if (!dataset.path.empty()) {
    j["dataset"]["path"] = dataset.path;
  } else {
    json ph = json::parse(phantom_config_to_json(dataset.phantom.base));
    ph["train_volumes"] = dataset.phantom.train_volumes;
    ph["test_volumes"] = dataset.phantom.test_volumes;
    ph["pool_seed"] = dataset.phantom.pool_seed;
    ph["radius_jitter"] = dataset.phantom.radius_jitter;
    ph["intensity_jitter"] = dataset.phantom.intensity_jitter;
    ph["tortuosity_jitter"] = dataset.phantom.tortuosity_jitter;
    j["dataset"]["phantom"] = ph;
  }
  j["train"] = json::parse(base_train.to_json());
  j["runs_dir"] = runs_dir;
  return j.dump(2);
}

// ---- experiment execution ----

std::vector<ResultRecord> run_experiment(const ExperimentSpec& spec) {
  if (spec.runs_dir.empty()) throw std::runtime_error("run_experiment: runs_dir not set");
  fs::create_directories(spec.runs_dir);
  const std::string results_path = (fs::path(spec.runs_dir) / "results.csv").string();

  MaterializedDataset data = materialize(spec.dataset);

  // Train/test disjointness comes first; nothing trains if it fails.
  {
    std::set<std::string> train_ids(data.train_ids.begin(), data.train_ids.end());
    for (const auto& id : data.test_ids)
      if (train_ids.count(id))
        throw std::runtime_error("run_experiment: train/test volumes overlap: " + id);
  }

  // Already-completed cells are skipped.
  std::map<std::string, ResultRecord> done;
  if (fs::exists(results_path))
    for (ResultRecord& r : read_results_csv(results_path)) done[r.cell_key] = r;

  const std::string config_digest =
      hex64(fnv64(spec.base_train.to_json() + "|" + dataset_digest(spec.dataset)));

  std::vector<Cell> cells;
  for (const Method m : spec.methods)
    for (const auto& [num_labeled, num_unlabeled] : spec.compositions)
      for (const std::uint64_t seed : spec.seeds)
        for (const DegradationSpec& deg : spec.degradations)
          cells.push_back(Cell{m, num_labeled, num_unlabeled, seed, deg});

  std::vector<ResultRecord> records;
  for (const Cell& cell : cells) {
    const std::string key = hex64(fnv64(cell_canonical(spec, cell, config_digest)));
    if (auto it = done.find(key); it != done.end()) {
      records.push_back(it->second);
      continue;
    }

    // Composition selection: labeled subset without replacement, then the
    // unlabeled complement, both shuffled by the cell's data seed.
    std::vector<int> labeled_order = data.labeled_pool;
    {
      Rng shuffle_rng(derive_seed(cell.data_seed, "composition-shuffle"));
      for (int i = static_cast<int>(labeled_order.size()) - 1; i > 0; --i)
        std::swap(labeled_order[i], labeled_order[shuffle_rng.uniform_int(0, i)]);
    }
    if (cell.num_labeled > static_cast<int>(labeled_order.size()))
      throw std::runtime_error("run_experiment: composition labeled count exceeds pool");

    TrainingSet ts;
    ts.images = data.train_images;
    ts.labels = data.train_labels;
    ts.ids = data.train_ids;
    ts.labeled.assign(labeled_order.begin(), labeled_order.begin() + cell.num_labeled);

    if (data.pool_is_split) {
      std::vector<int> unl = data.unlabeled_pool;
      Rng unl_rng(derive_seed(cell.data_seed, "unlabeled-shuffle"));
      for (int i = static_cast<int>(unl.size()) - 1; i > 0; --i)
        std::swap(unl[i], unl[unl_rng.uniform_int(0, i)]);
      if (cell.num_unlabeled > static_cast<int>(unl.size()))
        throw std::runtime_error("run_experiment: composition unlabeled count exceeds pool");
      ts.unlabeled.assign(unl.begin(), unl.begin() + cell.num_unlabeled);
    } else {
      if (cell.num_labeled + cell.num_unlabeled > static_cast<int>(labeled_order.size()))
        throw std::runtime_error("run_experiment: composition exceeds pool size");
      ts.unlabeled.assign(labeled_order.begin() + cell.num_labeled,
                          labeled_order.begin() + cell.num_labeled + cell.num_unlabeled);
    }

    // The degradation touches only the labeled training labels; evaluation
    // stays against clean test labels.
    if (cell.degradation.kind != DegradationKind::none) {
      for (std::size_t i = 0; i < ts.labeled.size(); ++i) {
        DegradationSpec vol_spec = cell.degradation;
        vol_spec.rng_seed = derive_seed(cell.degradation.rng_seed ^ splitmix64(cell.data_seed),
                                        "degrade-volume", i);
        ts.labels[ts.labeled[i]] = apply_degradation(ts.labels[ts.labeled[i]], vol_spec);
      }
    }

    TrainConfig cfg = spec.base_train;
    cfg.method = cell.method;
    cfg.data_seed = cell.data_seed;
    cfg.weight_seed = derive_seed(cell.data_seed, "weights");

    const fs::path cell_dir = fs::path(spec.runs_dir) / "cells" / key;
    fs::create_directories(cell_dir);
    {
      json meta;
      meta["cell_key"] = key;
      meta["protocol"] = protocol_name(spec.protocol);
      meta["method"] = method_name(cell.method);
      meta["num_labeled"] = cell.num_labeled;
      meta["num_unlabeled"] = cell.num_unlabeled;
      meta["data_seed"] = cell.data_seed;
      meta["degradation"] = cell.degradation.name();
      meta["degradation_seed"] = cell.degradation.rng_seed;
      meta["dataset"] = dataset_digest(spec.dataset);
      meta["labeled_ids"] = [&] {
        json arr = json::array();
        for (const int i : ts.labeled) arr.push_back(ts.ids[i]);
        return arr;
      }();
      std::ofstream mf(cell_dir / "cell.json");
      mf << meta.dump(2) << "\n";
    }

    const TrainResult trained = train(cfg, ts, cell_dir.string());

    ResultRecord rec;
    rec.cell_key = key;
    rec.protocol = protocol_name(spec.protocol);
    rec.method = cell.method;
    rec.num_labeled = cell.num_labeled;
    rec.num_unlabeled = cell.num_unlabeled;
    rec.data_seed = cell.data_seed;
    rec.degradation = cell.degradation.name();
    for (std::size_t i = 0; i < data.test_images.size(); ++i) {
      const LabelVolume pred =
          predict_label(*trained.model, data.test_images[i], cfg.patch_size);
      const ClDiceReport report = cl_dice(pred, data.test_labels[i]);
      rec.per_volume.push_back(
          {data.test_ids[i], report.dice, report.cldice, report.tprec, report.tsens});
    }
    finalize_stats(rec);

    std::ostringstream rows;
    for (const VolumeMetrics& v : rec.per_volume)
      rows << rec.cell_key << ',' << rec.protocol << ',' << method_name(rec.method) << ','
           << rec.num_labeled << ',' << rec.num_unlabeled << ',' << rec.data_seed << ','
           << rec.degradation << ',' << v.volume_id << ',' << format_double(v.dsc) << ','
           << format_double(v.cldice) << ',' << format_double(v.tprec) << ','
           << format_double(v.tsens) << "\n";
    append_rows_locked(results_path, RESULTS_HEADER, rows.str());

    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ResultRecord> read_results_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  std::getline(f, line);  // header
  std::map<std::string, ResultRecord> by_key;
  std::vector<std::string> order;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 12) throw std::runtime_error("malformed results row: " + line);
    ResultRecord& r = by_key[fields[0]];
    if (r.cell_key.empty()) {
      r.cell_key = fields[0];
      r.protocol = fields[1];
      r.method = method_from_name(fields[2]);
      r.num_labeled = std::stoi(fields[3]);
      r.num_unlabeled = std::stoi(fields[4]);
      r.data_seed = std::stoull(fields[5]);
      r.degradation = fields[6];
      order.push_back(fields[0]);
    }
    r.per_volume.push_back({fields[7], std::stod(fields[8]), std::stod(fields[9]),
                            std::stod(fields[10]), std::stod(fields[11])});
  }
  std::vector<ResultRecord> out;
  for (const auto& key : order) {
    ResultRecord r = by_key[key];
    finalize_stats(r);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- aggregation ----

namespace {

struct Quantiles {
  double mn, q25, med, q75, mx;
};

Quantiles quantiles(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const auto q = [&](double p) {
    const double pos = p * (static_cast<double>(values.size()) - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  return {values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

double mean_of(const std::vector<double>& v) {
  double m = 0;
  for (const double x : v) m += x;
  return m / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v, double mean) {
  double var = 0;
  for (const double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

std::vector<SummaryRow> aggregate(const std::vector<ResultRecord>& records) {
  if (records.empty()) throw std::runtime_error("aggregate: no records");
  using Key = std::tuple<std::string, std::string, int, int, std::string>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const ResultRecord& r : records) {
    const Key key{r.protocol, method_name(r.method), r.num_labeled, r.num_unlabeled, r.degradation};
    groups[key].first.push_back(r.mean_dsc);
    groups[key].second.push_back(r.mean_cldice);
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, vals] : groups) {
    SummaryRow row;
    row.protocol = std::get<0>(key);
    row.method = std::get<1>(key);
    row.num_labeled = std::get<2>(key);
    row.num_unlabeled = std::get<3>(key);
    row.degradation = std::get<4>(key);
    row.n = static_cast<int>(vals.first.size());
    row.mean_dsc = mean_of(vals.first);
    row.std_dsc = pop_std(vals.first, row.mean_dsc);
    const Quantiles qd = quantiles(vals.first);
    row.min_dsc = qd.mn;
    row.q25_dsc = qd.q25;
    row.median_dsc = qd.med;
    row.q75_dsc = qd.q75;
    row.max_dsc = qd.mx;
    row.mean_cldice = mean_of(vals.second);
    row.std_cldice = pop_std(vals.second, row.mean_cldice);
    const Quantiles qc = quantiles(vals.second);
    row.min_cldice = qc.mn;
    row.q25_cldice = qc.q25;
    row.median_cldice = qc.med;
    row.q75_cldice = qc.q75;
    row.max_cldice = qc.mx;
    rows.push_back(std::move(row));
  }
  return rows;  // std::map iteration gives the deterministic order
}

std::string summary_csv_header() {
  return "protocol,method,num_labeled,num_unlabeled,degradation,n,"
         "mean_dsc,std_dsc,min_dsc,q25_dsc,median_dsc,q75_dsc,max_dsc,"
         "mean_cldice,std_cldice,min_cldice,q25_cldice,median_cldice,q75_cldice,max_cldice\n";
}

std::string summary_row_csv(const SummaryRow& r) {
  std::ostringstream os;
  os << r.protocol << ',' << r.method << ',' << r.num_labeled << ',' << r.num_unlabeled << ','
     << r.degradation << ',' << r.n << ',' << format_double(r.mean_dsc) << ','
     << format_double(r.std_dsc) << ',' << format_double(r.min_dsc) << ','
     << format_double(r.q25_dsc) << ',' << format_double(r.median_dsc) << ','
     << format_double(r.q75_dsc) << ',' << format_double(r.max_dsc) << ','
     << format_double(r.mean_cldice) << ',' << format_double(r.std_cldice) << ','
     << format_double(r.min_cldice) << ',' << format_double(r.q25_cldice) << ','
     << format_double(r.median_cldice) << ',' << format_double(r.q75_cldice) << ','
     << format_double(r.max_cldice) << '\n';
  return os.str();
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << summary_csv_header();
  for (const SummaryRow& r : rows) f << summary_row_csv(r);
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  std::getline(f, line);
  std::vector<SummaryRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> s;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) s.push_back(field);
    if (s.size() != 20) throw std::runtime_error("malformed summary row: " + line);
    SummaryRow r;
    r.protocol = s[0];
    r.method = s[1];
    r.num_labeled = std::stoi(s[2]);
    r.num_unlabeled = std::stoi(s[3]);
    r.degradation = s[4];
    r.n = std::stoi(s[5]);
    r.mean_dsc = std::stod(s[6]);
    r.std_dsc = std::stod(s[7]);
    r.min_dsc = std::stod(s[8]);
    r.q25_dsc = std::stod(s[9]);
    r.median_dsc = std::stod(s[10]);
    r.q75_dsc = std::stod(s[11]);
    r.max_dsc = std::stod(s[12]);
    r.mean_cldice = std::stod(s[13]);
    r.std_cldice = std::stod(s[14]);
    r.min_cldice = std::stod(s[15]);
    r.q25_cldice = std::stod(s[16]);
    r.median_cldice = std::stod(s[17]);
    r.q75_cldice = std::stod(s[18]);
    r.max_cldice = std::stod(s[19]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace vb
