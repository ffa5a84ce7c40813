#pragma once

#include <array>
#include <string>
#include <vector>

namespace cad {

// The nine fine-grained classroom activities:
//   a  instructor announcement      sa student answers question
//   l  instructor lecture           g  group work
//   iq instructor asks question     s  silence
//   ia instructor answers question  o  other (unstructured time)
enum class Activity : int { a = 0, l, iq, ia, sq, sa, g, s, o };
inline constexpr int kNumActivities = 9;

const std::string& activityCode(Activity a);
Activity parseActivity(const std::string& code);

// 9-way, 5-way {ist,stu,grp,sil,oth}, or 4-way {sgl,grp,sil,oth} labeling.
// Coarser schemes are total surjective merges of the 9-way labels.
struct LabelScheme {
  int arity = 9;
  std::vector<std::string> classes;

  static LabelScheme make(int arity);
  const std::string& className(int index) const { return classes.at(index); }
};

int mapLabelScheme(Activity label, const LabelScheme& scheme);

struct AnnotationInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  Activity label = Activity::o;
};

struct FrameLabels {
  LabelScheme scheme;
  std::vector<int> labels;

  int frames() const { return static_cast<int>(labels.size()); }
};

// Frame t takes the label of the interval containing its center t*hop;
// a boundary exactly at a center belongs to the later interval. Intervals
// must be sorted and non-overlapping. Uncovered frames are an error unless
// fill_gaps maps them to "other".
FrameLabels intervalsToFrameLabels(const std::vector<AnnotationInterval>& intervals, int n_frames,
                                   const LabelScheme& scheme, double hop_ms = 10.0, bool fill_gaps = false);

// Per-class frame counts; sums to the frame count.
std::vector<long long> classCounts(const FrameLabels& fl);

// Annotation CSV: header "start_s,end_s,label", labels are the nine codes.
std::vector<AnnotationInterval> readAnnotationCsv(const std::string& path);
void writeAnnotationCsv(const std::string& path, const std::vector<AnnotationInterval>& intervals);

}  // namespace cad
