#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "unlearn/common.hpp"
#include "unlearn/experiment.hpp"
#include "unlearn/io_util.hpp"

namespace unlearn {

namespace fs = std::filesystem;

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

// Minimal line chart; axes are linear with five ticks.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series) {
  const double width = 760, height = 460;
  const double ml = 70, mr = 180, mt = 40, mb = 55;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double yspan = ymax - ymin;
  ymin -= 0.05 * yspan;
  ymax += 0.05 * yspan;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
      << svg_escape(title) << "</text>\n";

  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << height - mb << "\" stroke=\"black\"/>\n";
  char buf[64];
  for (int t = 0; t <= 4; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 4.0;
    const double fy = ymin + (ymax - ymin) * t / 4.0;
    std::snprintf(buf, sizeof buf, "%.4g", fx);
    svg << "<text x=\"" << px(fx) << "\" y=\"" << height - mb + 18
        << "\" text-anchor=\"middle\">" << buf << "</text>\n";
    svg << "<line x1=\"" << px(fx) << "\" y1=\"" << height - mb << "\" x2=\"" << px(fx)
        << "\" y2=\"" << height - mb + 4 << "\" stroke=\"black\"/>\n";
    std::snprintf(buf, sizeof buf, "%.4g", fy);
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << py(fy) + 4
        << "\" text-anchor=\"end\">" << buf << "</text>\n";
    svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
        << py(fy) << "\" stroke=\"black\"/>\n";
  }
  svg << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">" << svg_escape(x_label) << "</text>\n";
  svg << "<text x=\"18\" y=\"" << (mt + height - mb) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (mt + height - mb) / 2
      << ")\">" << svg_escape(y_label) << "</text>\n";

  int color = 0;
  double legend_y = mt + 10;
  for (const auto& s : series) {
    const char* stroke = kPalette[color % 10];
    std::ostringstream pts;
    for (auto [x, y] : s.points) pts << px(x) << "," << py(y) << " ";
    svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.6\" points=\""
        << pts.str() << "\"/>\n";
    for (auto [x, y] : s.points) {
      svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.4\" fill=\""
          << stroke << "\"/>\n";
    }
    svg << "<line x1=\"" << width - mr + 10 << "\" y1=\"" << legend_y << "\" x2=\""
        << width - mr + 34 << "\" y2=\"" << legend_y << "\" stroke=\"" << stroke
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << width - mr + 40 << "\" y=\"" << legend_y + 4 << "\">"
        << svg_escape(s.label) << "</text>\n";
    legend_y += 18;
    ++color;
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  check_data(out.good(), "cannot write " + path);
  out << svg.str();
}

struct CellData {
  nlohmann::json manifest;
  std::vector<std::pair<std::int64_t, double>> loss;
  std::vector<std::pair<std::int64_t, double>> train_acc;
  std::vector<std::pair<std::int64_t, double>> test_acc;
  bool has_metrics = false;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void emit_plots(const std::string& out_dir) {
  const fs::path root(out_dir);
  check_data(fs::exists(root / "summary.csv"),
             out_dir + " has no summary.csv; run the sweep first");
  const fs::path plots = root / "plots";
  fs::create_directories(plots);

  std::map<std::string, CellData> cells;
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& entry : fs::directory_iterator(root / "cells")) {
    const fs::path manifest_path = entry.path() / "manifest.json";
    if (!fs::exists(manifest_path)) continue;
    CellData data;
    data.manifest = read_json_file(manifest_path.string());
    const std::string name = data.manifest.value("cell", entry.path().filename().string());
    if (data.manifest.value("status", "") != "complete") {
      warnings.push_back({{"cell", name},
                          {"reason", "incomplete: " + data.manifest.value("error", "missing")}});
    }
    const fs::path metrics = entry.path() / "metrics.csv";
    if (fs::exists(metrics)) {
      std::ifstream in(metrics.string());
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        const auto f = split_csv(line);
        if (f.size() != 4) continue;
        const std::int64_t iter = std::stoll(f[0]);
        if (!f[1].empty()) data.loss.emplace_back(iter, std::stod(f[1]));
        if (!f[2].empty()) data.train_acc.emplace_back(iter, std::stod(f[2]));
        if (!f[3].empty()) data.test_acc.emplace_back(iter, std::stod(f[3]));
      }
      data.has_metrics = true;
    } else if (data.manifest.value("status", "") == "complete") {
      warnings.push_back({{"cell", name}, {"reason", "metrics.csv missing"}});
    }
    cells.emplace(name, std::move(data));
  }

  // Tidy CSV: every plotted value, one row each.
  {
    std::ofstream tidy((plots / "tidy.csv").string(), std::ios::trunc);
    check_data(tidy.good(), "cannot write tidy.csv");
    tidy << "cell,noise,percentage,radius,filter,series,x,y\n";
    char buf[256];
    for (const auto& [name, data] : cells) {
      const auto& m = data.manifest;
      auto row = [&](const char* series, double x, double y) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.9g,%s,%s,%.9g,%.9g\n", name.c_str(),
                      m.value("noise", "").c_str(), m.value("percentage", 0.0),
                      m.value("radius", 0.0), m.value("filter", "").c_str(), series, x, y);
        tidy << buf;
      };
      if (m.value("status", "") == "complete") {
        row("final_test_acc", m.value("radius", 0.0), m.value("final_test_acc", 0.0));
      }
      for (auto [x, y] : data.loss) row("loss", static_cast<double>(x), y);
      for (auto [x, y] : data.train_acc) row("train_acc", static_cast<double>(x), y);
      for (auto [x, y] : data.test_acc) row("test_acc", static_cast<double>(x), y);
    }
  }

  // (a) final accuracy vs adversarial radius, one curve per noise arm.
  {
    std::map<std::string, Series> by_arm;
    for (const auto& [name, data] : cells) {
      const auto& m = data.manifest;
      if (m.value("status", "") != "complete") continue;
      std::string arm = m.value("noise", "");
      if (m.value("percentage", 0.0) > 0.0 && m.value("percentage", 0.0) < 1.0) {
        char b[32];
        std::snprintf(b, sizeof b, " %g%%", m.value("percentage", 0.0) * 100.0);
        arm += b;
      }
      if (m.value("filter", "none") != "none") arm += " " + m.value("filter", std::string());
      by_arm[arm].label = arm;
      by_arm[arm].points.emplace_back(m.value("radius", 0.0) * 255.0,
                                      m.value("final_test_acc", 0.0));
    }
    std::vector<Series> series;
    for (auto& [arm, s] : by_arm) {
      std::sort(s.points.begin(), s.points.end());
      series.push_back(std::move(s));
    }
    write_svg_chart((plots / "acc_vs_radius.svg").string(),
                    "Final test accuracy vs adversarial radius", "attack radius (x/255)",
                    "test accuracy (%)", series);
  }

  // (b) loss and (c) accuracy along training.
  {
    std::vector<Series> loss_series, acc_series;
    for (const auto& [name, data] : cells) {
      if (!data.has_metrics) continue;
      Series ls;
      ls.label = name;
      const std::size_t stride = std::max<std::size_t>(data.loss.size() / 400, 1);
      for (std::size_t i = 0; i < data.loss.size(); i += stride) {
        ls.points.emplace_back(static_cast<double>(data.loss[i].first), data.loss[i].second);
      }
      loss_series.push_back(std::move(ls));

      Series as;
      as.label = name + " test";
      for (auto [x, y] : data.test_acc) as.points.emplace_back(static_cast<double>(x), y);
      acc_series.push_back(std::move(as));
      Series ts;
      ts.label = name + " train";
      for (auto [x, y] : data.train_acc) ts.points.emplace_back(static_cast<double>(x), y);
      acc_series.push_back(std::move(ts));
    }
    write_svg_chart((plots / "loss_vs_iter.svg").string(), "Training loss", "iteration",
                    "loss", loss_series);
    write_svg_chart((plots / "acc_vs_iter.svg").string(), "Train/test accuracy", "iteration",
                    "accuracy (%)", acc_series);
  }

  write_json_file((plots / "warnings.json").string(),
                  {{"kind", "plot-warnings"}, {"warnings", warnings}});
}

}  // namespace unlearn
