#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cad/labels.hpp"
#include "cad/matrix.hpp"

namespace cad {

// Argmax decision rule; exact ties go to the lowest class index.
std::vector<int> argmaxPredictions(const Matrix& posteriors);

struct AccuracyResult {
  double accuracy = 0.0;
  double error_rate = 0.0;
};

AccuracyResult frameAccuracy(const std::vector<int>& predictions, const std::vector<int>& targets);
AccuracyResult frameAccuracy(const Matrix& posteriors, const std::vector<int>& targets);

// Class-frequency weighted F1 over hard predictions; per-class F1 is zero
// when precision+recall is zero.
double weightedF1(const std::vector<int>& predictions, const std::vector<int>& targets, int n_classes);

// Average precision with tied scores handled as groups: frames sharing a
// score enter together and contribute delta-recall times the precision at the
// end of the group. No interpolation.
double averagePrecision(const std::vector<double>& scores, const std::vector<char>& is_positive);

struct ApResult {
  std::vector<double> per_class;
  std::vector<bool> has_positives;  // classes without positives score 0 and are flagged
  double mean = 0.0;
};
ApResult meanAveragePrecision(const Matrix& posteriors, const std::vector<int>& targets);

// counts(i,j) = frames with target i predicted j; row sums are the supports.
Matrix confusionMatrix(const std::vector<int>& predictions, const std::vector<int>& targets, int n_classes);
Matrix rowNormalized(const Matrix& counts);

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};
struct PrCurve {
  std::vector<PrPoint> points;  // swept from the highest score; recall non-decreasing
};
// Requires at least one positive. Step area under the curve equals
// averagePrecision on the same inputs.
PrCurve prCurve(const std::vector<double>& scores, const std::vector<char>& is_positive);
double prCurveArea(const PrCurve& curve);

// Constant rows carrying the training split's empirical class distribution --
// the "majority class" reference predictor.
Matrix baselinePosteriors(const std::vector<long long>& train_counts, int frames);

struct EvalReport {
  int scheme_arity = 0;
  std::vector<std::string> classes;
  double map = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  double error_rate = 0.0;
  std::vector<double> per_class_ap;
  std::vector<bool> class_has_positives;
  std::vector<long long> support;
  long long n_frames = 0;
  Matrix confusion;
  std::vector<PrCurve> pr_curves;  // empty curve for classes without positives
};

EvalReport evaluatePosteriors(const Matrix& posteriors, const std::vector<int>& targets,
                              const LabelScheme& scheme);

// Per-session minutes spent in each activity implied by the predicted trace,
// against the annotation ground truth at the same frame resolution, with
// per-activity RMSE over sessions.
struct AggregateTimeReport {
  std::vector<std::string> classes;
  struct Row {
    std::string session_id;
    std::vector<double> predicted_min;
    std::vector<double> actual_min;
  };
  std::vector<Row> rows;
  std::vector<double> rmse_min;
  double mean_rmse = 0.0;  // uniform mean over activities
};

AggregateTimeReport aggregateTime(const std::vector<std::pair<std::string, std::vector<int>>>& predictions,
                                  const std::map<std::string, std::vector<AnnotationInterval>>& annotations,
                                  const LabelScheme& scheme, double hop_ms = 10.0);

nlohmann::json evalReportToJson(const EvalReport& report);
nlohmann::json aggregateReportToJson(const AggregateTimeReport& report);

void writeConfusionCsv(const std::string& path, const EvalReport& report);
void writePrCurvesCsv(const std::string& path, const EvalReport& report);
// frame_idx,time_s,predicted,actual; the actual column is blank when no
// reference labels are given.
void writeTraceCsv(const std::string& path, const std::vector<int>& predictions,
                   const std::vector<int>* actual, const LabelScheme& scheme, double hop_ms = 10.0);

}  // namespace cad
