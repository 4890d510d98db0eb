#pragma once

#include "phrc/core/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace phrc {

struct CorpusManifest {
  static constexpr int kVersion = 1;

  int version = kVersion;
  double dt = 0.0;
  Branch branch = Branch::Robot;
  std::size_t count = 0;
  int dim = 3;
  std::uint64_t seed = 0;
  std::vector<Label> labels;
  /// Free-form generation parameters, written under the "generator" key.
  nlohmann::json generator = nlohmann::json::object();

  nlohmann::json to_json() const;
  static CorpusManifest from_json(const nlohmann::json& j);
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<Trajectory> trajectories;
};

/// Writes the `#MANIFEST {json}` line, the CSV header and one row per sample.
/// Labels in the manifest are taken from the trajectories when left empty.
void write_corpus(std::ostream& out, CorpusManifest manifest, const std::vector<Trajectory>& trajs);
void write_corpus(const std::filesystem::path& path, CorpusManifest manifest,
                  const std::vector<Trajectory>& trajs);

Corpus read_corpus(std::istream& in);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace phrc
