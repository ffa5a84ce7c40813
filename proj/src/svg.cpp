#include "cad/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cad {

namespace {

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                          "#937860", "#da8bc3", "#8c8c8c", "#ccb974"};

const char* color(int i) { return kPalette[i % 9]; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

struct SvgDoc {
  std::ostringstream body;
  int width, height;

  SvgDoc(int w, int h) : width(w), height(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(w) << "\" height=\""
         << fmt(h) << "\" fill=\"" << fill << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width_px = 1.0,
            const std::string& dash = "") {
    body << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2) << "\" y2=\""
         << fmt(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << fmt(width_px) << "\"";
    if (!dash.empty()) body << " stroke-dasharray=\"" << dash << "\"";
    body << "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) body << fmt(x) << "," << fmt(y) << " ";
    body << "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"" << fmt(r) << "\" fill=\"" << fill
         << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 11, const std::string& anchor = "start") {
    body << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" font-size=\"" << size
         << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
  }
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("SVG " + path + ": cannot open for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
  }
};

}  // namespace

void writePrCurvesSvg(const std::string& path, const EvalReport& report) {
  const int W = 520, H = 420, L = 60, T = 30, plot_w = 380, plot_h = 340;
  SvgDoc doc(W, H);
  auto px = [&](double recall) { return L + recall * plot_w; };
  auto py = [&](double precision) { return T + (1.0 - precision) * plot_h; };

  for (double g = 0.0; g <= 1.0001; g += 0.2) {
    doc.line(px(g), py(0), px(g), py(1), "#dddddd");
    doc.line(px(0), py(g), px(1), py(g), "#dddddd");
    doc.text(px(g), py(0) + 16, fmt(g), 10, "middle");
    doc.text(px(0) - 8, py(g) + 4, fmt(g), 10, "end");
  }
  doc.line(px(0), py(0), px(1), py(0), "#333333");
  doc.line(px(0), py(0), px(0), py(1), "#333333");
  doc.text(L + plot_w / 2, H - 8, "recall", 12, "middle");
  doc.text(14, T + plot_h / 2, "precision", 12, "middle");

  for (size_t c = 0; c < report.pr_curves.size(); ++c) {
    const PrCurve& curve = report.pr_curves[c];
    if (curve.points.empty()) continue;
    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(px(0.0), py(curve.points.front().precision));
    for (const PrPoint& p : curve.points) pts.emplace_back(px(p.recall), py(p.precision));
    doc.polyline(pts, color(static_cast<int>(c)));
    char label[64];
    std::snprintf(label, sizeof(label), "%s (AP %.3f)", report.classes[c].c_str(), report.per_class_ap[c]);
    doc.rect(L + plot_w + 8, T + 14.0 * c, 10, 10, color(static_cast<int>(c)));
    doc.text(L + plot_w + 22, T + 14.0 * c + 9, label, 10);
  }
  doc.save(path);
}

void writeTraceSvg(const std::string& path, const std::vector<int>& predicted,
                   const std::vector<int>* actual, const LabelScheme& scheme, double hop_ms) {
  const int W = 900, L = 70, plot_w = W - L - 30;
  const int band_h = 46, gap = 16;
  const int n_bands = actual ? 2 : 1;
  const int T = 26, H = T + n_bands * (band_h + gap) + 40;
  SvgDoc doc(W, H);

  const double total_s = predicted.size() * hop_ms / 1000.0;
  auto px = [&](double t_s) { return L + (total_s > 0 ? t_s / total_s : 0.0) * plot_w; };

  auto band = [&](const std::vector<int>& labels, double y, const std::string& name) {
    doc.text(L - 8, y + band_h / 2 + 4, name, 11, "end");
    size_t run_start = 0;
    for (size_t i = 1; i <= labels.size(); ++i) {
      if (i == labels.size() || labels[i] != labels[run_start]) {
        const double x0 = px(run_start * hop_ms / 1000.0);
        const double x1 = px(i * hop_ms / 1000.0);
        doc.rect(x0, y, std::max(0.3, x1 - x0), band_h, color(labels[run_start]));
        run_start = i;
      }
    }
  };

  band(predicted, T, "predicted");
  if (actual) band(*actual, T + band_h + gap, "actual");

  const double y_axis = T + n_bands * (band_h + gap);
  const double tick_s = total_s > 360 ? 60.0 : 30.0;
  for (double t = 0.0; t <= total_s + 1e-9; t += tick_s) {
    doc.line(px(t), y_axis, px(t), y_axis + 4, "#333333");
    doc.text(px(t), y_axis + 16, fmt(t / 60.0) + "m", 9, "middle");
  }
  for (int c = 0; c < scheme.arity; ++c) {
    doc.rect(L + 64.0 * c, H - 14, 10, 10, color(c));
    doc.text(L + 64.0 * c + 13, H - 5, scheme.className(c), 10);
  }
  doc.save(path);
}

void writeAggregateScatterSvg(const std::string& path, const AggregateTimeReport& report) {
  const int W = 560, H = 470, L = 60, T = 30, plot_w = 380, plot_h = 380;
  SvgDoc doc(W, H);

  double max_min = 1.0;
  for (const auto& row : report.rows)
    for (size_t c = 0; c < report.classes.size(); ++c)
      max_min = std::max({max_min, row.predicted_min[c], row.actual_min[c]});
  max_min = std::ceil(max_min);

  auto px = [&](double m) { return L + m / max_min * plot_w; };
  auto py = [&](double m) { return T + plot_h - m / max_min * plot_h; };

  const double tick = max_min > 8 ? 2.0 : 1.0;
  for (double g = 0.0; g <= max_min + 1e-9; g += tick) {
    doc.line(px(g), py(0), px(g), py(max_min), "#eeeeee");
    doc.line(px(0), py(g), px(max_min), py(g), "#eeeeee");
    doc.text(px(g), py(0) + 16, fmt(g), 9, "middle");
    doc.text(px(0) - 6, py(g) + 3, fmt(g), 9, "end");
  }
  doc.line(px(0), py(0), px(max_min), py(max_min), "#999999", 1.0, "4,3");
  doc.line(px(0), py(0), px(max_min), py(0), "#333333");
  doc.line(px(0), py(0), px(0), py(max_min), "#333333");
  doc.text(L + plot_w / 2, H - 26, "actual minutes", 12, "middle");
  doc.text(14, T + plot_h / 2, "predicted", 12, "middle");

  for (const auto& row : report.rows)
    for (size_t c = 0; c < report.classes.size(); ++c)
      doc.circle(px(row.actual_min[c]), py(row.predicted_min[c]), 3.5, color(static_cast<int>(c)));

  for (size_t c = 0; c < report.classes.size(); ++c) {
    char label[64];
    std::snprintf(label, sizeof(label), "%s (RMSE %.2f)", report.classes[c].c_str(), report.rmse_min[c]);
    doc.rect(L + plot_w + 8, T + 14.0 * c, 10, 10, color(static_cast<int>(c)));
    doc.text(L + plot_w + 22, T + 14.0 * c + 9, label, 10);
  }
  char headline[64];
  std::snprintf(headline, sizeof(headline), "mean RMSE %.2f min", report.mean_rmse);
  doc.text(L, T - 10, headline, 12);
  doc.save(path);
}

}  // namespace cad
