// Line-delimited dataset files: line 1 is a metadata header object,
// each following line one scene object. Loading validates all invariants
// and reports the offending line on failure.
#pragma once

#include <string>

#include "rf/scene.hpp"

namespace rf {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path);

/// One scene as its serialized line (used by save and by round-trip tests).
std::string scene_to_line(const Scene& scene);
Scene scene_from_line(const std::string& line);

std::string meta_to_line(const DatasetMeta& meta);
DatasetMeta meta_from_line(const std::string& line);

}  // namespace rf
