#include "cad/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "cad/rng.hpp"

namespace cad {

namespace {
const std::vector<std::string> kSplitNames = {"train", "dev", "test1", "test2"};
}

const SessionEntry& SplitManifest::session(const std::string& id) const {
  for (const SessionEntry& s : sessions)
    if (s.session_id == id) return s;
  throw std::out_of_range("SplitManifest: unknown session '" + id + "'");
}

std::vector<SessionEntry> SplitManifest::split(const std::string& name) const {
  auto it = splits.find(name);
  if (it == splits.end()) throw std::out_of_range("SplitManifest: unknown split '" + name + "'");
  std::vector<SessionEntry> out;
  out.reserve(it->second.size());
  for (const std::string& id : it->second) out.push_back(session(id));
  return out;
}

void SplitManifest::validate() const {
  std::set<std::string> ids;
  for (const SessionEntry& s : sessions)
    if (!ids.insert(s.session_id).second)
      throw std::runtime_error("SplitManifest: duplicate session id '" + s.session_id + "'");

  std::set<std::string> assigned;
  for (const auto& [name, list] : splits)
    for (const std::string& id : list) {
      if (!ids.count(id)) throw std::runtime_error("SplitManifest: split '" + name + "' lists unknown session '" + id + "'");
      if (!assigned.insert(id).second)
        throw std::runtime_error("SplitManifest: session '" + id + "' appears in more than one split");
    }
  if (assigned.size() != ids.size())
    throw std::runtime_error("SplitManifest: " + std::to_string(ids.size() - assigned.size()) +
                             " sessions are not assigned to any split");

  std::set<int> test2_instructors, other_instructors;
  for (const auto& [name, list] : splits)
    for (const std::string& id : list)
      (name == "test2" ? test2_instructors : other_instructors).insert(session(id).instructor_id);
  for (int i : test2_instructors)
    if (other_instructors.count(i))
      throw std::runtime_error("SplitManifest: instructor " + std::to_string(i) +
                               " appears both in test2 and a non-held-out split");
}

SplitManifest makeInstructorSplit(const std::vector<SessionEntry>& sessions, int n_withheld, uint64_t seed,
                                  double train_ratio, double dev_ratio, double test1_ratio) {
  if (sessions.empty()) throw std::invalid_argument("makeInstructorSplit: no sessions");
  if (train_ratio <= 0 || dev_ratio <= 0 || test1_ratio <= 0 ||
      std::abs(train_ratio + dev_ratio + test1_ratio - 1.0) > 1e-6)
    throw std::invalid_argument("makeInstructorSplit: ratios must be positive and sum to 1");

  std::vector<int> instructors;
  for (const SessionEntry& s : sessions) instructors.push_back(s.instructor_id);
  std::sort(instructors.begin(), instructors.end());
  instructors.erase(std::unique(instructors.begin(), instructors.end()), instructors.end());
  if (n_withheld < 1 || n_withheld >= static_cast<int>(instructors.size()))
    throw std::invalid_argument("makeInstructorSplit: cannot withhold " + std::to_string(n_withheld) +
                                " of " + std::to_string(instructors.size()) + " instructors");

  Rng rng(seed);
  rng.shuffle(instructors);
  std::set<int> withheld(instructors.end() - n_withheld, instructors.end());

  SplitManifest m;
  m.sessions = sessions;
  m.seed = seed;
  m.n_withheld = n_withheld;
  for (const std::string& name : kSplitNames) m.splits[name] = {};

  std::vector<std::string> remaining;
  for (const SessionEntry& s : sessions) {
    if (withheld.count(s.instructor_id))
      m.splits["test2"].push_back(s.session_id);
    else
      remaining.push_back(s.session_id);
  }
  if (remaining.size() < 3)
    throw std::invalid_argument("makeInstructorSplit: need at least 3 non-held-out sessions");

  rng.shuffle(remaining);
  const int n = static_cast<int>(remaining.size());
  int n_dev = std::max(1, static_cast<int>(std::llround(dev_ratio * n)));
  int n_test1 = std::max(1, static_cast<int>(std::llround(test1_ratio * n)));
  while (n - n_dev - n_test1 < 1) {  // keep train non-empty for tiny corpora
    if (n_dev > 1)
      --n_dev;
    else
      --n_test1;
  }
  for (int i = 0; i < n; ++i) {
    const std::string& id = remaining[i];
    if (i < n_dev)
      m.splits["dev"].push_back(id);
    else if (i < n_dev + n_test1)
      m.splits["test1"].push_back(id);
    else
      m.splits["train"].push_back(id);
  }
  for (auto& [name, list] : m.splits) std::sort(list.begin(), list.end());
  m.validate();
  return m;
}

nlohmann::json manifestToJson(const SplitManifest& m) {
  nlohmann::json sessions = nlohmann::json::array();
  for (const SessionEntry& s : m.sessions)
    sessions.push_back({{"session_id", s.session_id},
                        {"instructor_id", s.instructor_id},
                        {"wav", s.wav_path},
                        {"annotations", s.annotation_path}});
  return nlohmann::json{
      {"sessions", sessions}, {"splits", m.splits}, {"seed", m.seed}, {"n_withheld", m.n_withheld}};
}

SplitManifest manifestFromJson(const nlohmann::json& j) {
  SplitManifest m;
  for (const auto& s : j.at("sessions")) {
    SessionEntry e;
    e.session_id = s.at("session_id").get<std::string>();
    e.instructor_id = s.at("instructor_id").get<int>();
    e.wav_path = s.at("wav").get<std::string>();
    e.annotation_path = s.at("annotations").get<std::string>();
    m.sessions.push_back(std::move(e));
  }
  if (j.contains("splits")) m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
  m.seed = j.value("seed", 0ULL);
  m.n_withheld = j.value("n_withheld", 0);
  return m;
}

SplitManifest readManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest " + path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("manifest " + path + ": invalid JSON: " + e.what());
  }
  return manifestFromJson(j);
}

void writeManifest(const std::string& path, const SplitManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest " + path + ": cannot open for writing");
  out << manifestToJson(m).dump(2) << "\n";
}

}  // namespace cad
