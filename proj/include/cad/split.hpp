#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace cad {

struct SessionEntry {
  std::string session_id;
  int instructor_id = 0;
  std::string wav_path;
  std::string annotation_path;
};

// Session inventory plus the train/dev/test1/test2 assignment. test2 holds
// every session of the withheld instructors and nothing else, so it measures
// generalization to instructors never seen in training.
struct SplitManifest {
  std::vector<SessionEntry> sessions;
  std::map<std::string, std::vector<std::string>> splits;
  uint64_t seed = 0;
  int n_withheld = 0;

  const SessionEntry& session(const std::string& id) const;
  std::vector<SessionEntry> split(const std::string& name) const;
  // Splits partition the sessions; withheld instructors appear only in test2.
  void validate() const;
};

SplitManifest makeInstructorSplit(const std::vector<SessionEntry>& sessions, int n_withheld, uint64_t seed,
                                  double train_ratio = 0.68, double dev_ratio = 0.16,
                                  double test1_ratio = 0.16);

nlohmann::json manifestToJson(const SplitManifest& m);
SplitManifest manifestFromJson(const nlohmann::json& j);
SplitManifest readManifest(const std::string& path);
void writeManifest(const std::string& path, const SplitManifest& m);

}  // namespace cad
