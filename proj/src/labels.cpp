#include "cad/labels.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cad {

namespace {

const std::array<std::string, kNumActivities> kCodes = {"a", "l", "iq", "ia", "sq", "sa", "g", "s", "o"};

// 9 -> 5: instructor speech, student speech, group, silence, other
constexpr std::array<int, kNumActivities> kTo5 = {0, 0, 0, 0, 1, 1, 2, 3, 4};
// 9 -> 4: any single voice, group, silence, other
constexpr std::array<int, kNumActivities> kTo4 = {0, 0, 0, 0, 0, 0, 1, 2, 3};

}  // namespace

const std::string& activityCode(Activity a) { return kCodes[static_cast<int>(a)]; }

Activity parseActivity(const std::string& code) {
  for (int i = 0; i < kNumActivities; ++i)
    if (kCodes[i] == code) return static_cast<Activity>(i);
  throw std::invalid_argument("unknown activity label '" + code + "'");
}

LabelScheme LabelScheme::make(int arity) {
  LabelScheme s;
  s.arity = arity;
  switch (arity) {
    case 9:
      s.classes.assign(kCodes.begin(), kCodes.end());
      break;
    case 5:
      s.classes = {"ist", "stu", "grp", "sil", "oth"};
      break;
    case 4:
      s.classes = {"sgl", "grp", "sil", "oth"};
      break;
    default:
      throw std::invalid_argument("LabelScheme: arity must be 4, 5, or 9");
  }
  return s;
}

int mapLabelScheme(Activity label, const LabelScheme& scheme) {
  const int i = static_cast<int>(label);
  switch (scheme.arity) {
    case 9:
      return i;
    case 5:
      return kTo5[i];
    case 4:
      return kTo4[i];
    default:
      throw std::invalid_argument("mapLabelScheme: bad scheme arity");
  }
}

FrameLabels intervalsToFrameLabels(const std::vector<AnnotationInterval>& intervals, int n_frames,
                                   const LabelScheme& scheme, double hop_ms, bool fill_gaps) {
  if (n_frames < 0) throw std::invalid_argument("intervalsToFrameLabels: negative frame count");
  for (size_t i = 0; i < intervals.size(); ++i) {
    const auto& iv = intervals[i];
    if (!(iv.start_s >= 0.0 && iv.start_s < iv.end_s))
      throw std::invalid_argument("intervalsToFrameLabels: interval " + std::to_string(i) +
                                  " is empty or has negative bounds");
    if (i > 0 && intervals[i - 1].end_s > iv.start_s)
      throw std::invalid_argument("intervalsToFrameLabels: intervals overlap or are unsorted at index " +
                                  std::to_string(i));
  }

  const int other = mapLabelScheme(Activity::o, scheme);
  FrameLabels out;
  out.scheme = scheme;
  out.labels.resize(n_frames);

  size_t cursor = 0;
  for (int t = 0; t < n_frames; ++t) {
    // Centers compared in milliseconds; at the 10 ms hop t*hop is exact.
    const double center_ms = t * hop_ms;
    while (cursor < intervals.size() && intervals[cursor].end_s * 1000.0 <= center_ms) ++cursor;
    if (cursor < intervals.size() && intervals[cursor].start_s * 1000.0 <= center_ms) {
      out.labels[t] = mapLabelScheme(intervals[cursor].label, scheme);
    } else if (fill_gaps) {
      out.labels[t] = other;
    } else {
      throw std::runtime_error("intervalsToFrameLabels: frame " + std::to_string(t) + " (center " +
                               std::to_string(center_ms / 1000.0) + " s) is not covered by any interval");
    }
  }
  return out;
}

std::vector<long long> classCounts(const FrameLabels& fl) {
  std::vector<long long> counts(fl.scheme.arity, 0);
  for (int label : fl.labels) {
    if (label < 0 || label >= fl.scheme.arity)
      throw std::invalid_argument("classCounts: label index out of range");
    ++counts[label];
  }
  return counts;
}

std::vector<AnnotationInterval> readAnnotationCsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("annotation CSV " + path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line.rfind("start_s,end_s,label", 0) != 0)
    throw std::runtime_error("annotation CSV " + path + ": missing 'start_s,end_s,label' header");

  std::vector<AnnotationInterval> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string start, end, label;
    if (!std::getline(ss, start, ',') || !std::getline(ss, end, ',') || !std::getline(ss, label))
      throw std::runtime_error("annotation CSV " + path + ": malformed line " + std::to_string(line_no));
    AnnotationInterval iv;
    try {
      iv.start_s = std::stod(start);
      iv.end_s = std::stod(end);
    } catch (const std::exception&) {
      throw std::runtime_error("annotation CSV " + path + ": bad number on line " + std::to_string(line_no));
    }
    iv.label = parseActivity(label);
    out.push_back(iv);
  }
  return out;
}

void writeAnnotationCsv(const std::string& path, const std::vector<AnnotationInterval>& intervals) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("annotation CSV " + path + ": cannot open for writing");
  out << "start_s,end_s,label\n";
  char buf[96];
  for (const auto& iv : intervals) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.3f,%s\n", iv.start_s, iv.end_s, activityCode(iv.label).c_str());
    out << buf;
  }
  if (!out) throw std::runtime_error("annotation CSV " + path + ": write failed");
}

}  // namespace cad
