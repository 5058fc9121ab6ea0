#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vesselbench/bench.hpp"

namespace vb {

namespace fs = std::filesystem;

namespace {

constexpr int WIDTH = 880, HEIGHT = 520;
constexpr int ML = 70, MR = 190, MT = 30, MB = 55;  // margins
constexpr int PW = WIDTH - ML - MR, PH = HEIGHT - MT - MB;

const char* PALETTE[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};
constexpr int PALETTE_N = 8;

double yscale(double v) { return MT + PH * (1.0 - v); }  // metric range [0,1]

std::string curve_label(const SummaryRow& r, bool many_degradations) {
  if (!many_degradations) return r.method;
  return r.degradation == "reference" ? r.method + " (reference)" : r.method + " (" + r.degradation + ")";
}

struct MetricAccess {
  const char* name;
  double (*mean)(const SummaryRow&);
  double (*stdev)(const SummaryRow&);
  double (*mn)(const SummaryRow&);
  double (*q25)(const SummaryRow&);
  double (*med)(const SummaryRow&);
  double (*q75)(const SummaryRow&);
  double (*mx)(const SummaryRow&);
};

const MetricAccess METRICS[] = {
    {"dsc", [](const SummaryRow& r) { return r.mean_dsc; },
     [](const SummaryRow& r) { return r.std_dsc; }, [](const SummaryRow& r) { return r.min_dsc; },
     [](const SummaryRow& r) { return r.q25_dsc; }, [](const SummaryRow& r) { return r.median_dsc; },
     [](const SummaryRow& r) { return r.q75_dsc; }, [](const SummaryRow& r) { return r.max_dsc; }},
    {"cldice", [](const SummaryRow& r) { return r.mean_cldice; },
     [](const SummaryRow& r) { return r.std_cldice; }, [](const SummaryRow& r) { return r.min_cldice; },
     [](const SummaryRow& r) { return r.q25_cldice; }, [](const SummaryRow& r) { return r.median_cldice; },
     [](const SummaryRow& r) { return r.q75_cldice; }, [](const SummaryRow& r) { return r.max_cldice; }},
};

void svg_header(std::ostream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << WIDTH << "\" height=\"" << HEIGHT
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"" << WIDTH << "\" height=\"" << HEIGHT << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << ML << "\" y=\"18\" font-size=\"14\">" << title << "</text>\n";
}

void svg_axes(std::ostream& os, const std::string& xlabel, const std::string& ylabel) {
  os << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << MT + PH
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ML << "\" y1=\"" << MT + PH << "\" x2=\"" << ML + PW << "\" y2=\""
     << MT + PH << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    const double y = yscale(v);
    os << "<line x1=\"" << ML - 4 << "\" y1=\"" << y << "\" x2=\"" << ML << "\" y2=\"" << y
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ML << "\" y1=\"" << y << "\" x2=\"" << ML + PW << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << ML - 10 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v
       << "</text>\n";
  }
  os << "<text x=\"" << ML + PW / 2 << "\" y=\"" << HEIGHT - 10
     << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << MT + PH / 2 << "\" transform=\"rotate(-90 16 " << MT + PH / 2
     << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
}

void svg_legend(std::ostream& os, const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = MT + 12 + 18.0 * i;
    os << "<rect x=\"" << ML + PW + 14 << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
       << PALETTE[i % PALETTE_N] << "\"/>\n";
    os << "<text x=\"" << ML + PW + 30 << "\" y=\"" << y + 2 << "\">" << labels[i] << "</text>\n";
  }
}

}  // namespace

std::vector<std::string> plot(const std::vector<SummaryRow>& summary, PlotKind kind,
                              const std::string& out_dir) {
  if (summary.empty()) throw std::runtime_error("plot: empty summary");
  fs::create_directories(out_dir);

  std::set<std::string> degradations;
  for (const SummaryRow& r : summary) degradations.insert(r.degradation);
  const bool many_deg = degradations.size() > 1;

  // Curves keyed by label, deterministic order.
  std::map<std::string, std::vector<const SummaryRow*>> curves;
  for (const SummaryRow& r : summary) curves[curve_label(r, many_deg)].push_back(&r);
  for (auto& [label, rows] : curves)
    std::sort(rows.begin(), rows.end(), [](const SummaryRow* a, const SummaryRow* b) {
      return a->num_labeled < b->num_labeled;
    });

  std::set<int> xs_set;
  for (const SummaryRow& r : summary) xs_set.insert(r.num_labeled);
  const std::vector<int> xs(xs_set.begin(), xs_set.end());
  const double x_lo = xs.front(), x_hi = xs.back();
  const auto xscale = [&](double v) {
    if (x_hi == x_lo) return ML + PW / 2.0;
    return ML + PW * (v - x_lo) / (x_hi - x_lo);
  };

  std::vector<std::string> written;
  const std::string kind_name = kind == PlotKind::lines ? "lines" : "boxes";

  for (const MetricAccess& metric : METRICS) {
    const std::string stem = std::string("plot_") + metric.name + "_" + kind_name;
    const std::string svg_path = (fs::path(out_dir) / (stem + ".svg")).string();
    std::ofstream os(svg_path);
    if (!os) throw std::runtime_error("cannot write file: " + svg_path);

    svg_header(os, std::string(metric.name) + " vs labeled volumes");
    svg_axes(os, "labeled training volumes", metric.name);

    std::vector<std::string> labels;
    int color = 0;
    if (kind == PlotKind::lines) {
      for (const auto& [label, rows] : curves) {
        const char* col = PALETTE[color % PALETTE_N];
        // Standard-deviation band.
        std::ostringstream band;
        for (const SummaryRow* r : rows)
          band << xscale(r->num_labeled) << ','
               << yscale(std::min(1.0, metric.mean(*r) + metric.stdev(*r))) << ' ';
        for (auto it = rows.rbegin(); it != rows.rend(); ++it)
          band << xscale((*it)->num_labeled) << ','
               << yscale(std::max(0.0, metric.mean(**it) - metric.stdev(**it))) << ' ';
        os << "<polygon points=\"" << band.str() << "\" fill=\"" << col
           << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
        std::ostringstream line;
        for (const SummaryRow* r : rows)
          line << xscale(r->num_labeled) << ',' << yscale(metric.mean(*r)) << ' ';
        os << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << col
           << "\" stroke-width=\"2\"/>\n";
        for (const SummaryRow* r : rows)
          os << "<circle cx=\"" << xscale(r->num_labeled) << "\" cy=\"" << yscale(metric.mean(*r))
             << "\" r=\"3\" fill=\"" << col << "\"/>\n";
        labels.push_back(label);
        ++color;
      }
    } else {
      // One box per (x position, curve); curves share an x slot side by side.
      const double slot = PW / static_cast<double>(xs.size());
      const double box_w = std::max(6.0, std::min(24.0, slot / (2.0 * curves.size())));
      for (const auto& [label, rows] : curves) {
        const char* col = PALETTE[color % PALETTE_N];
        for (const SummaryRow* r : rows) {
          const auto xi = std::find(xs.begin(), xs.end(), r->num_labeled) - xs.begin();
          const double cx = ML + slot * (xi + 0.5) +
                            (color - static_cast<int>(curves.size()) / 2.0 + 0.5) * (box_w + 4);
          const double q25 = yscale(metric.q25(*r)), q75 = yscale(metric.q75(*r));
          const double med = yscale(metric.med(*r));
          const double lo = yscale(metric.mn(*r)), hi = yscale(metric.mx(*r));
          os << "<line x1=\"" << cx << "\" y1=\"" << lo << "\" x2=\"" << cx << "\" y2=\"" << hi
             << "\" stroke=\"" << col << "\"/>\n";
          os << "<rect x=\"" << cx - box_w / 2 << "\" y=\"" << q75 << "\" width=\"" << box_w
             << "\" height=\"" << std::max(1.0, q25 - q75) << "\" fill=\"" << col
             << "\" fill-opacity=\"0.4\" stroke=\"" << col << "\"/>\n";
          os << "<line x1=\"" << cx - box_w / 2 << "\" y1=\"" << med << "\" x2=\"" << cx + box_w / 2
             << "\" y2=\"" << med << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
        }
        labels.push_back(label);
        ++color;
      }
      // x tick labels for the box slots
      for (std::size_t i = 0; i < xs.size(); ++i)
        os << "<text x=\"" << ML + slot * (i + 0.5) << "\" y=\"" << MT + PH + 16
           << "\" text-anchor=\"middle\">" << xs[i] << "</text>\n";
    }
    if (kind == PlotKind::lines)
      for (const int x : xs)
        os << "<text x=\"" << xscale(x) << "\" y=\"" << MT + PH + 16
           << "\" text-anchor=\"middle\">" << x << "</text>\n";
    svg_legend(os, labels);
    os << "</svg>\n";
    written.push_back(svg_path);

    // The values behind the plot, byte-identical to aggregate's rows.
    const std::string csv_path = (fs::path(out_dir) / (stem + ".csv")).string();
    std::ofstream cf(csv_path);
    if (!cf) throw std::runtime_error("cannot write file: " + csv_path);
    cf << summary_csv_header();
    for (const SummaryRow& r : summary) cf << summary_row_csv(r);
    written.push_back(csv_path);
  }
  return written;
}

}  // namespace vb
