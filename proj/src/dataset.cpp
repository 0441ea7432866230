#include "mmnet/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mmnet/error.hpp"

namespace mmnet {

std::vector<std::string> Dataset::subjects() const {
  std::set<std::string> uniq;
  for (const SamplePair& s : samples) uniq.insert(s.subject_id);
  return {uniq.begin(), uniq.end()};
}

void Dataset::validate() const {
  if (class_names.empty()) throw ProtocolError("dataset declares no classes");
  for (const SamplePair& s : samples) {
    if (s.label < 0 || s.label >= static_cast<int>(class_names.size()))
      throw ProtocolError("sample of subject " + s.subject_id +
                          " has label " + std::to_string(s.label) +
                          " outside the declared classes");
    if (s.onset_candidates.empty() || s.apex_candidates.empty())
      throw ProtocolError("sample of subject " + s.subject_id +
                          " has an empty candidate list");
  }
}

Dataset load_dataset(const std::string& root) {
  const std::string index_path = root + "/index.txt";
  std::ifstream in(index_path);
  if (!in) throw IoError("cannot open dataset index: " + index_path);
  std::string line;
  if (!std::getline(in, line) || line != "mmnet-dataset 1")
    throw IoError("dataset index must start with 'mmnet-dataset 1'");
  Dataset ds;
  ds.root = root;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "class") {
      std::string name;
      is >> name;
      if (name.empty()) throw IoError("class line without a name");
      ds.class_names.push_back(name);
    } else if (kind == "sample") {
      SamplePair s;
      int n = 0;
      is >> s.subject_id >> s.label >> s.canonical_onset >> s.canonical_apex;
      is >> n;
      for (int i = 0; i < n; ++i) {
        std::string p;
        is >> p;
        s.onset_candidates.push_back(p);
      }
      is >> n;
      for (int i = 0; i < n; ++i) {
        std::string p;
        is >> p;
        s.apex_candidates.push_back(p);
      }
      if (!is) throw IoError("malformed sample line: " + line);
      ds.samples.push_back(std::move(s));
    } else {
      throw IoError("unknown dataset index record: " + kind);
    }
  }
  ds.validate();
  return ds;
}

void save_dataset_index(const Dataset& ds) {
  ds.validate();
  std::ofstream out(ds.root + "/index.txt", std::ios::binary);
  if (!out) throw IoError("cannot write dataset index under " + ds.root);
  out << "mmnet-dataset 1\n";
  for (const std::string& name : ds.class_names) out << "class " << name << "\n";
  for (const SamplePair& s : ds.samples) {
    out << "sample " << s.subject_id << " " << s.label << " "
        << s.canonical_onset << " " << s.canonical_apex << " "
        << s.onset_candidates.size();
    for (const std::string& p : s.onset_candidates) out << " " << p;
    out << " " << s.apex_candidates.size();
    for (const std::string& p : s.apex_candidates) out << " " << p;
    out << "\n";
  }
  if (!out) throw IoError("failed writing dataset index under " + ds.root);
}

std::vector<std::pair<Dataset, Dataset>> loso_folds(const Dataset& ds) {
  const std::vector<std::string> subjects = ds.subjects();
  if (subjects.size() < 2)
    throw ProtocolError(
        "leave-one-subject-out needs at least two subjects, found " +
        std::to_string(subjects.size()));
  std::vector<std::pair<Dataset, Dataset>> folds;
  for (const std::string& held_out : subjects) {
    Dataset train, test;
    train.root = test.root = ds.root;
    train.class_names = test.class_names = ds.class_names;
    for (const SamplePair& s : ds.samples) {
      (s.subject_id == held_out ? test : train).samples.push_back(s);
    }
    folds.emplace_back(std::move(train), std::move(test));
  }
  return folds;
}

const Image& ImageCache::get(const std::string& rel_path) {
  auto it = cache_.find(rel_path);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(rel_path, read_ppm(root_ + "/" + rel_path))
      .first->second;
}

}  // namespace mmnet
