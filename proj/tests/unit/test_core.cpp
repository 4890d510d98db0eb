#include <doctest.h>

#include "phrc/core/corpus_io.hpp"
#include "phrc/core/error.hpp"
#include "phrc/core/types.hpp"

#include <random>
#include <sstream>

using namespace phrc;

namespace {

Trajectory make_traj(std::size_t n, Branch branch = Branch::Robot, double dt = 0.05,
                     Label label = Label::ObstacleFree, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<StateSample> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i].t = static_cast<double>(i) * dt;
    s[i].pos = Vec3(nd(rng), nd(rng), nd(rng));
    s[i].vel = Vec3(nd(rng), nd(rng), nd(rng));
    if (branch == Branch::Human) s[i].force = Vec3(nd(rng), nd(rng), nd(rng));
  }
  return Trajectory(branch, dt, std::move(s), label);
}

std::string write_to_string(const CorpusManifest& m, const std::vector<Trajectory>& t) {
  std::ostringstream out;
  write_corpus(out, m, t);
  return out.str();
}

}  // namespace

TEST_CASE("slice_windows placement counts") {
  CHECK(slice_windows(make_traj(20), 8, 12, 1).size() == 1);
  CHECK(slice_windows(make_traj(21), 8, 12, 1).size() == 2);
  CHECK(slice_windows(make_traj(19), 8, 12, 1).empty());
}

TEST_CASE("slice_windows windows are contiguous and end at T_now") {
  const Trajectory tr = make_traj(40);
  const auto ws = slice_windows(tr, 8, 12, 3);
  REQUIRE(!ws.empty());
  for (std::size_t k = 0; k < ws.size(); ++k) {
    const auto& w = ws[k];
    CHECK(w.past.size() == 8);
    CHECK(w.future.size() == 12);
    CHECK(&w.past.back() + 1 == &w.future.front());
    CHECK(&w.past.back() == &tr[7 + 3 * k]);
    CHECK(w.future.front().t - w.t_now() == doctest::Approx(tr.dt()));
  }
}

TEST_CASE("window count formula holds for random lengths and strides") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(2, 80), lo(2, 10), lf(1, 14), st(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = static_cast<std::size_t>(len(rng));
    const std::size_t o = static_cast<std::size_t>(lo(rng));
    const std::size_t f = static_cast<std::size_t>(lf(rng));
    const std::size_t s = static_cast<std::size_t>(st(rng));
    const std::size_t expect = n >= o + f ? (n - o - f) / s + 1 : 0;
    CHECK(slice_windows(make_traj(n), o, f, s).size() == expect);
    CHECK(window_count(n, o, f, s) == expect);
  }
}

TEST_CASE("trajectory invariants are enforced") {
  std::vector<StateSample> s(3);
  for (int i = 0; i < 3; ++i) s[i].t = 0.1 * i;
  CHECK_NOTHROW(Trajectory(Branch::Robot, 0.1, s));
  CHECK_THROWS_AS(Trajectory(Branch::Human, 0.1, s), ValidationError);
  s[1].force = Vec3::Zero();
  CHECK_THROWS_AS(Trajectory(Branch::Robot, 0.1, s), ValidationError);
  s[1].force.reset();
  s[2].t = 0.25;
  CHECK_THROWS_AS(Trajectory(Branch::Robot, 0.1, s), ValidationError);
  CHECK_THROWS_AS(Trajectory(Branch::Robot, 0.1, {s[0]}), ValidationError);
}

TEST_CASE("empty corpus writes a header-only file and round-trips") {
  CorpusManifest m;
  m.dt = 0.05;
  const std::string text = write_to_string(m, {});
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  std::istringstream in(text);
  const Corpus c = read_corpus(in);
  CHECK(c.trajectories.empty());
  CHECK(c.manifest.count == 0);
}

TEST_CASE("two-sample trajectory round-trips exactly") {
  CorpusManifest m;
  m.dt = 0.01;
  m.count = 1;
  m.branch = Branch::Human;
  const Trajectory tr = make_traj(2, Branch::Human, 0.01);
  const std::string text = write_to_string(m, {tr});
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  std::istringstream in(text);
  const Corpus c = read_corpus(in);
  REQUIRE(c.trajectories.size() == 1);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(c.trajectories[0][i].t == tr[i].t);
    CHECK(c.trajectories[0][i].pos == tr[i].pos);
    CHECK(c.trajectories[0][i].vel == tr[i].vel);
    CHECK(*c.trajectories[0][i].force == *tr[i].force);
  }
}

TEST_CASE("100-trajectory corpus keeps its label histogram") {
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 100; ++i)
    trajs.push_back(make_traj(5, Branch::Human, 0.01, i < 40 ? Label::ObstacleFree : Label::ObstacleAvoid, i));
  CorpusManifest m;
  m.dt = 0.01;
  m.branch = Branch::Human;
  m.count = 100;
  std::istringstream in(write_to_string(m, trajs));
  const Corpus c = read_corpus(in);
  CHECK(c.manifest.count == 100);
  const auto free_count = std::count(c.manifest.labels.begin(), c.manifest.labels.end(), Label::ObstacleFree);
  CHECK(free_count == 40);
  CHECK(c.manifest.labels.size() - free_count == 60);
}

TEST_CASE("write -> read -> write is byte-identical on a random corpus") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> len(2, 30);
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 25; ++i) trajs.push_back(make_traj(static_cast<std::size_t>(len(rng)), Branch::Robot, 0.05, Label::ObstacleFree, rng()));
  CorpusManifest m;
  m.dt = 0.05;
  m.count = trajs.size();
  m.seed = 1234;
  m.generator = {{"kind", "test"}, {"sigma", 0.01}};
  const std::string first = write_to_string(m, trajs);
  std::istringstream in(first);
  const Corpus c = read_corpus(in);
  CHECK(write_to_string(c.manifest, c.trajectories) == first);
}

TEST_CASE("read_corpus rejects malformed input with line numbers") {
  CorpusManifest m;
  m.dt = 0.05;
  m.count = 1;
  std::string text = write_to_string(m, {make_traj(3)});

  SUBCASE("non-numeric cell") {
    const auto pos = text.find('\n', text.find("traj,")) + 1;  // first data row, line 3
    const auto comma = text.find(',', text.find(',', pos) + 1);
    text.replace(comma + 1, 1, "q");
    std::istringstream in(text);
    try {
      read_corpus(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("version mismatch") {
    text.replace(text.find("\"version\":1"), 11, "\"version\":9");
    std::istringstream in(text);
    CHECK_THROWS(read_corpus(in));
  }
  SUBCASE("count mismatch") {
    text.replace(text.find("\"count\":1"), 9, "\"count\":2");
    std::istringstream in(text);
    CHECK_THROWS_AS(read_corpus(in), ParseError);
  }
}

TEST_CASE("write_corpus validates manifest consistency") {
  CorpusManifest m;
  m.dt = 0.05;
  m.count = 2;
  std::ostringstream out;
  CHECK_THROWS_AS(write_corpus(out, m, {make_traj(3), make_traj(3, Branch::Robot, 0.1)}), ValidationError);
  CHECK_THROWS_AS(write_corpus(out, m, {make_traj(3)}), ValidationError);
  CHECK_THROWS_AS(write_corpus(std::filesystem::path("/nonexistent/dir/x.csv"), m, {make_traj(3), make_traj(3)}),
                  IoError);
}
