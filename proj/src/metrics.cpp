#include "cad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace cad {

std::vector<int> argmaxPredictions(const Matrix& posteriors) {
  std::vector<int> preds(posteriors.rows());
  for (int t = 0; t < posteriors.rows(); ++t) {
    const double* row = posteriors.row(t);
    int arg = 0;
    for (int c = 1; c < posteriors.cols(); ++c)
      if (row[c] > row[arg]) arg = c;
    preds[t] = arg;
  }
  return preds;
}

AccuracyResult frameAccuracy(const std::vector<int>& predictions, const std::vector<int>& targets) {
  if (predictions.size() != targets.size())
    throw std::invalid_argument("frameAccuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                                std::to_string(targets.size()) + " targets");
  if (targets.empty()) throw std::invalid_argument("frameAccuracy: no frames");
  long long correct = 0;
  for (size_t i = 0; i < targets.size(); ++i) correct += predictions[i] == targets[i] ? 1 : 0;
  AccuracyResult r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(targets.size());
  r.error_rate = 1.0 - r.accuracy;
  return r;
}

AccuracyResult frameAccuracy(const Matrix& posteriors, const std::vector<int>& targets) {
  return frameAccuracy(argmaxPredictions(posteriors), targets);
}

double weightedF1(const std::vector<int>& predictions, const std::vector<int>& targets, int n_classes) {
  const Matrix cm = confusionMatrix(predictions, targets, n_classes);
  const double total = static_cast<double>(targets.size());
  double weighted = 0.0;
  for (int c = 0; c < n_classes; ++c) {
    double tp = cm(c, c), row = 0.0, col = 0.0;
    for (int j = 0; j < n_classes; ++j) {
      row += cm(c, j);
      col += cm(j, c);
    }
    const double precision = col > 0.0 ? tp / col : 0.0;
    const double recall = row > 0.0 ? tp / row : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    weighted += (row / total) * f1;
  }
  return weighted;
}

double averagePrecision(const std::vector<double>& scores, const std::vector<char>& is_positive) {
  if (scores.size() != is_positive.size()) throw std::invalid_argument("averagePrecision: length mismatch");
  const size_t n = scores.size();
  long long total_pos = 0;
  for (char p : is_positive) total_pos += p ? 1 : 0;
  if (total_pos == 0) return 0.0;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0, prev_recall = 0.0;
  long long cum_pos = 0, cum = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    long long group_pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      group_pos += is_positive[order[j]] ? 1 : 0;
      ++j;
    }
    cum_pos += group_pos;
    cum += static_cast<long long>(j - i);
    const double recall = static_cast<double>(cum_pos) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(cum_pos) / static_cast<double>(cum);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ApResult meanAveragePrecision(const Matrix& posteriors, const std::vector<int>& targets) {
  if (posteriors.rows() != static_cast<int>(targets.size()))
    throw std::invalid_argument("meanAveragePrecision: shape mismatch");
  const int C = posteriors.cols();
  ApResult result;
  result.per_class.resize(C, 0.0);
  result.has_positives.resize(C, false);
  std::vector<double> scores(targets.size());
  std::vector<char> pos(targets.size());
  for (int c = 0; c < C; ++c) {
    bool any = false;
    for (size_t t = 0; t < targets.size(); ++t) {
      scores[t] = posteriors(static_cast<int>(t), c);
      pos[t] = targets[t] == c ? 1 : 0;
      any = any || pos[t];
    }
    result.has_positives[c] = any;
    result.per_class[c] = any ? averagePrecision(scores, pos) : 0.0;
    result.mean += result.per_class[c];
  }
  result.mean /= C;
  return result;
}

Matrix confusionMatrix(const std::vector<int>& predictions, const std::vector<int>& targets, int n_classes) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("confusionMatrix: length mismatch");
  Matrix cm(n_classes, n_classes);
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= n_classes || predictions[i] < 0 || predictions[i] >= n_classes)
      throw std::invalid_argument("confusionMatrix: class index out of range at frame " + std::to_string(i));
    cm(targets[i], predictions[i]) += 1.0;
  }
  return cm;
}

Matrix rowNormalized(const Matrix& counts) {
  Matrix out = counts;
  for (int r = 0; r < out.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < out.cols(); ++c) sum += out(r, c);
    if (sum > 0.0)
      for (int c = 0; c < out.cols(); ++c) out(r, c) /= sum;
  }
  return out;
}

PrCurve prCurve(const std::vector<double>& scores, const std::vector<char>& is_positive) {
  if (scores.size() != is_positive.size()) throw std::invalid_argument("prCurve: length mismatch");
  long long total_pos = 0;
  for (char p : is_positive) total_pos += p ? 1 : 0;
  if (total_pos == 0) throw std::invalid_argument("prCurve: no positive frames for this class");

  const size_t n = scores.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  PrCurve curve;
  long long cum_pos = 0, cum = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      cum_pos += is_positive[order[j]] ? 1 : 0;
      ++j;
    }
    cum += static_cast<long long>(j - i);
    PrPoint p;
    p.threshold = scores[order[i]];
    p.recall = static_cast<double>(cum_pos) / static_cast<double>(total_pos);
    p.precision = static_cast<double>(cum_pos) / static_cast<double>(cum);
    curve.points.push_back(p);
    i = j;
  }
  return curve;
}

double prCurveArea(const PrCurve& curve) {
  double area = 0.0, prev_recall = 0.0;
  for (const PrPoint& p : curve.points) {
    area += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return area;
}

Matrix baselinePosteriors(const std::vector<long long>& train_counts, int frames) {
  long long total = 0;
  for (long long n : train_counts) total += n;
  if (total <= 0) throw std::invalid_argument("baselinePosteriors: empty training distribution");
  Matrix p(frames, static_cast<int>(train_counts.size()));
  for (int t = 0; t < frames; ++t)
    for (size_t c = 0; c < train_counts.size(); ++c)
      p(t, static_cast<int>(c)) = static_cast<double>(train_counts[c]) / static_cast<double>(total);
  return p;
}

EvalReport evaluatePosteriors(const Matrix& posteriors, const std::vector<int>& targets,
                              const LabelScheme& scheme) {
  if (posteriors.cols() != scheme.arity)
    throw std::invalid_argument("evaluatePosteriors: posterior width does not match the scheme");
  EvalReport report;
  report.scheme_arity = scheme.arity;
  report.classes = scheme.classes;
  report.n_frames = static_cast<long long>(targets.size());

  const std::vector<int> preds = argmaxPredictions(posteriors);
  const AccuracyResult acc = frameAccuracy(preds, targets);
  report.accuracy = acc.accuracy;
  report.error_rate = acc.error_rate;
  report.weighted_f1 = weightedF1(preds, targets, scheme.arity);

  const ApResult ap = meanAveragePrecision(posteriors, targets);
  report.map = ap.mean;
  report.per_class_ap = ap.per_class;
  report.class_has_positives = ap.has_positives;

  report.confusion = confusionMatrix(preds, targets, scheme.arity);
  report.support.assign(scheme.arity, 0);
  for (int y : targets) ++report.support[y];

  report.pr_curves.resize(scheme.arity);
  std::vector<double> scores(targets.size());
  std::vector<char> pos(targets.size());
  for (int c = 0; c < scheme.arity; ++c) {
    if (!ap.has_positives[c]) continue;
    for (size_t t = 0; t < targets.size(); ++t) {
      scores[t] = posteriors(static_cast<int>(t), c);
      pos[t] = targets[t] == c ? 1 : 0;
    }
    report.pr_curves[c] = prCurve(scores, pos);
  }
  return report;
}

AggregateTimeReport aggregateTime(const std::vector<std::pair<std::string, std::vector<int>>>& predictions,
                                  const std::map<std::string, std::vector<AnnotationInterval>>& annotations,
                                  const LabelScheme& scheme, double hop_ms) {
  AggregateTimeReport report;
  report.classes = scheme.classes;
  const int C = scheme.arity;
  const double frames_to_min = hop_ms / 60000.0;

  for (const auto& [session_id, preds] : predictions) {
    auto it = annotations.find(session_id);
    if (it == annotations.end())
      throw std::invalid_argument("aggregateTime: session '" + session_id + "' has predictions but no annotations");
    const int T = static_cast<int>(preds.size());
    const FrameLabels actual =
        intervalsToFrameLabels(it->second, T, scheme, hop_ms, /*fill_gaps=*/true);

    AggregateTimeReport::Row row;
    row.session_id = session_id;
    row.predicted_min.assign(C, 0.0);
    row.actual_min.assign(C, 0.0);
    std::vector<long long> pred_counts(C, 0), actual_counts(C, 0);
    for (int t = 0; t < T; ++t) {
      if (preds[t] < 0 || preds[t] >= C)
        throw std::invalid_argument("aggregateTime: prediction out of range in '" + session_id + "'");
      ++pred_counts[preds[t]];
      ++actual_counts[actual.labels[t]];
    }
    for (int c = 0; c < C; ++c) {
      row.predicted_min[c] = static_cast<double>(pred_counts[c]) * frames_to_min;
      row.actual_min[c] = static_cast<double>(actual_counts[c]) * frames_to_min;
    }
    report.rows.push_back(std::move(row));
  }

  report.rmse_min.assign(C, 0.0);
  if (!report.rows.empty()) {
    for (int c = 0; c < C; ++c) {
      double sq = 0.0;
      for (const auto& row : report.rows) {
        const double d = row.predicted_min[c] - row.actual_min[c];
        sq += d * d;
      }
      report.rmse_min[c] = std::sqrt(sq / static_cast<double>(report.rows.size()));
      report.mean_rmse += report.rmse_min[c];
    }
    report.mean_rmse /= C;
  }
  return report;
}

nlohmann::json evalReportToJson(const EvalReport& r) {
  nlohmann::json confusion = nlohmann::json::array();
  nlohmann::json confusion_norm = nlohmann::json::array();
  const Matrix norm = rowNormalized(r.confusion);
  for (int i = 0; i < r.confusion.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array(), nrow = nlohmann::json::array();
    for (int j = 0; j < r.confusion.cols(); ++j) {
      row.push_back(static_cast<long long>(r.confusion(i, j)));
      nrow.push_back(norm(i, j));
    }
    confusion.push_back(row);
    confusion_norm.push_back(nrow);
  }
  nlohmann::json per_class = nlohmann::json::object();
  for (size_t c = 0; c < r.classes.size(); ++c)
    per_class[r.classes[c]] = {{"ap", r.per_class_ap[c]},
                               {"support", r.support[c]},
                               {"has_positives", static_cast<bool>(r.class_has_positives[c])}};
  return nlohmann::json{
      {"scheme", r.scheme_arity},   {"classes", r.classes},
      {"n_frames", r.n_frames},     {"map", r.map},
      {"weighted_f1", r.weighted_f1}, {"accuracy", r.accuracy},
      {"error_rate", r.error_rate}, {"per_class", per_class},
      {"confusion", confusion},     {"confusion_row_normalized", confusion_norm},
  };
}

nlohmann::json aggregateReportToJson(const AggregateTimeReport& r) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json per_class = nlohmann::json::object();
    for (size_t c = 0; c < r.classes.size(); ++c)
      per_class[r.classes[c]] = {{"predicted_min", row.predicted_min[c]}, {"actual_min", row.actual_min[c]}};
    sessions.push_back({{"session", row.session_id}, {"activities", per_class}});
  }
  nlohmann::json rmse = nlohmann::json::object();
  for (size_t c = 0; c < r.classes.size(); ++c) rmse[r.classes[c]] = r.rmse_min[c];
  return nlohmann::json{{"classes", r.classes},
                        {"sessions", sessions},
                        {"rmse_min", rmse},
                        {"mean_rmse_min", r.mean_rmse}};
}

void writeConfusionCsv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("confusion CSV " + path + ": cannot open for writing");
  out << "target\\predicted";
  for (const auto& c : r.classes) out << "," << c;
  out << "\n";
  for (int i = 0; i < r.confusion.rows(); ++i) {
    out << r.classes[i];
    for (int j = 0; j < r.confusion.cols(); ++j) out << "," << static_cast<long long>(r.confusion(i, j));
    out << "\n";
  }
}

void writePrCurvesCsv(const std::string& path, const EvalReport& r) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("PR CSV " + path + ": cannot open for writing");
  out << "class,threshold,precision,recall\n";
  char buf[160];
  for (size_t c = 0; c < r.pr_curves.size(); ++c)
    for (const PrPoint& p : r.pr_curves[c].points) {
      std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g\n", r.classes[c].c_str(), p.threshold, p.precision,
                    p.recall);
      out << buf;
    }
}

void writeTraceCsv(const std::string& path, const std::vector<int>& predictions,
                   const std::vector<int>* actual, const LabelScheme& scheme, double hop_ms) {
  if (actual && actual->size() != predictions.size())
    throw std::invalid_argument("writeTraceCsv: prediction/reference length mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("trace CSV " + path + ": cannot open for writing");
  out << "frame_idx,time_s,predicted,actual\n";
  char buf[96];
  for (size_t t = 0; t < predictions.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%zu,%.2f,%s,%s\n", t, static_cast<double>(t) * hop_ms / 1000.0,
                  scheme.className(predictions[t]).c_str(),
                  actual ? scheme.className((*actual)[t]).c_str() : "");
    out << buf;
  }
}

}  // namespace cad
