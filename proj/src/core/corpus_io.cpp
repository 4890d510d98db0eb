#include "phrc/core/corpus_io.hpp"

#include "phrc/core/error.hpp"
#include "phrc/core/numfmt.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

namespace phrc {
namespace {

constexpr std::string_view kManifestTag = "#MANIFEST ";
constexpr std::string_view kHeader = "traj,t,x,y,z,vx,vy,vz,fx,fy,fz";

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

}  // namespace

nlohmann::json CorpusManifest::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  j["dt"] = dt;
  j["branch"] = to_string(branch);
  j["count"] = count;
  j["dim"] = dim;
  j["seed"] = seed;
  auto labs = nlohmann::json::array();
  for (Label l : labels) labs.push_back(to_string(l));
  j["labels"] = labs;
  j["generator"] = generator;
  return j;
}

CorpusManifest CorpusManifest::from_json(const nlohmann::json& j) {
  CorpusManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kVersion)
      throw ValidationError("unsupported corpus version " + std::to_string(m.version));
    m.dt = j.at("dt").get<double>();
    m.branch = parse_branch(j.at("branch").get<std::string>());
    m.count = j.at("count").get<std::size_t>();
    m.dim = j.at("dim").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& l : j.at("labels")) m.labels.push_back(parse_label(l.get<std::string>()));
    if (j.contains("generator")) m.generator = j.at("generator");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("manifest: ") + e.what());
  }
  if (m.dim != 3) throw ValidationError("corpus dim must be 3");
  return m;
}

void write_corpus(std::ostream& out, CorpusManifest manifest, const std::vector<Trajectory>& trajs) {
  if (manifest.count != trajs.size())
    throw ValidationError("manifest count " + std::to_string(manifest.count) + " != " +
                          std::to_string(trajs.size()) + " trajectories");
  if (manifest.labels.empty())
    for (const auto& tr : trajs) manifest.labels.push_back(tr.label());
  if (manifest.labels.size() != trajs.size())
    throw ValidationError("manifest labels do not match trajectory count");
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (trajs[i].dt() != manifest.dt)
      throw ValidationError("trajectory " + std::to_string(i) + " has dt " +
                            format_double(trajs[i].dt()) + ", manifest says " +
                            format_double(manifest.dt));
    if (trajs[i].branch() != manifest.branch)
      throw ValidationError("trajectory " + std::to_string(i) + " has mismatched branch");
    if (trajs[i].label() != manifest.labels[i])
      throw ValidationError("trajectory " + std::to_string(i) + " label disagrees with manifest");
  }

  out << kManifestTag << manifest.to_json().dump() << '\n';
  out << kHeader << '\n';
  std::string row;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    for (const StateSample& s : trajs[i].samples()) {
      row = std::to_string(i);
      row += ',';
      row += format_double(s.t);
      for (int k = 0; k < 3; ++k) (row += ',') += format_double(s.pos[k]);
      for (int k = 0; k < 3; ++k) (row += ',') += format_double(s.vel[k]);
      for (int k = 0; k < 3; ++k) {
        row += ',';
        if (s.force) row += format_double((*s.force)[k]);
      }
      out << row << '\n';
    }
  }
  if (!out) throw IoError("write_corpus: stream failure");
}

void write_corpus(const std::filesystem::path& path, CorpusManifest manifest,
                  const std::vector<Trajectory>& trajs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_corpus(out, std::move(manifest), trajs);
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Corpus read_corpus(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind(kManifestTag, 0) != 0)
    throw ParseError(1, "expected '#MANIFEST {json}' line");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line.substr(kManifestTag.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("manifest json: ") + e.what());
  }
  Corpus corpus{CorpusManifest::from_json(j), {}};
  const CorpusManifest& m = corpus.manifest;
  if (m.labels.size() != m.count) throw ParseError(1, "labels array length != count");

  if (!std::getline(in, line) || line != kHeader) throw ParseError(2, "expected CSV header");

  std::vector<StateSample> current;
  long long current_traj = -1;
  auto flush = [&](std::size_t line_no) {
    if (current_traj < 0) return;
    try {
      corpus.trajectories.emplace_back(m.branch, m.dt, std::move(current),
                                       m.labels.at(static_cast<std::size_t>(current_traj)));
    } catch (const ValidationError& e) {
      throw ParseError(line_no, e.what());
    }
    current.clear();
  };

  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw ParseError(line_no, "empty row");
    const auto cells = split_csv(line);
    if (cells.size() != 11)
      throw ParseError(line_no, "expected 11 cells, got " + std::to_string(cells.size()));
    const auto traj = parse_int(cells[0]);
    if (!traj || *traj < 0) throw ParseError(line_no, "bad trajectory index");
    if (*traj != current_traj) {
      if (*traj != current_traj + 1) throw ParseError(line_no, "trajectory indices not contiguous");
      if (static_cast<std::size_t>(*traj) >= m.count)
        throw ParseError(line_no, "trajectory index exceeds manifest count");
      flush(line_no);
      current_traj = *traj;
    }
    StateSample s;
    double vals[9];
    const auto t = parse_double(cells[1]);
    if (!t) throw ParseError(line_no, "non-numeric time cell");
    s.t = *t;
    for (int k = 0; k < 6; ++k) {
      const auto v = parse_double(cells[2 + k]);
      if (!v) throw ParseError(line_no, "non-numeric cell in column " + std::to_string(3 + k));
      vals[k] = *v;
    }
    s.pos = Vec3(vals[0], vals[1], vals[2]);
    s.vel = Vec3(vals[3], vals[4], vals[5]);
    const bool any_force = !cells[8].empty() || !cells[9].empty() || !cells[10].empty();
    if (any_force) {
      for (int k = 0; k < 3; ++k) {
        const auto v = parse_double(cells[8 + k]);
        if (!v) throw ParseError(line_no, "non-numeric force cell in column " + std::to_string(9 + k));
        vals[6 + k] = *v;
      }
      s.force = Vec3(vals[6], vals[7], vals[8]);
    }
    current.push_back(s);
  }
  flush(line_no);
  if (corpus.trajectories.size() != m.count)
    throw ParseError(line_no, "manifest count " + std::to_string(m.count) + " but found " +
                                  std::to_string(corpus.trajectories.size()) + " trajectories");
  return corpus;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_corpus(in);
}

}  // namespace phrc
