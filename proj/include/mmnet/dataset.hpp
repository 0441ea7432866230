#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmnet/image.hpp"

namespace mmnet {

// One labeled instance: the canonical onset/apex frames plus the frames
// around them that training may substitute.
struct SamplePair {
  std::string subject_id;
  int label = 0;
  std::string canonical_onset;  // paths relative to the dataset root
  std::string canonical_apex;
  std::vector<std::string> onset_candidates;
  std::vector<std::string> apex_candidates;
};

struct Dataset {
  std::string root;
  std::vector<std::string> class_names;
  std::vector<SamplePair> samples;

  std::vector<std::string> subjects() const;  // sorted unique ids
  void validate() const;
};

// Line-oriented index at <root>/index.txt:
//   mmnet-dataset 1
//   class <name>                     (one per label, in label order)
//   sample <subject> <label> <canonical_onset> <canonical_apex>
//          <n> <onset candidates...> <m> <apex candidates...>
Dataset load_dataset(const std::string& root);
void save_dataset_index(const Dataset& ds);

// One fold per subject: that subject as the test side, the rest as training.
std::vector<std::pair<Dataset, Dataset>> loso_folds(const Dataset& ds);

// Small decoded-image cache keyed by relative path; one per training context.
class ImageCache {
 public:
  explicit ImageCache(std::string root) : root_(std::move(root)) {}
  const Image& get(const std::string& rel_path);

 private:
  std::string root_;
  std::map<std::string, Image> cache_;
};

}  // namespace mmnet
