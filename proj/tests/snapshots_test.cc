// Copyright 2026 The Divert Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "divert/snapshots.h"

#include <fstream>
#include <set>
#include <thread>

#include "divert/divert.h"
#include "divert/mock_world.h"
#include "generators.h"
#include "gtest/gtest.h"
#include "json.hpp"
#include "test_util.h"

namespace divert {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

constexpr char kModel[] = "mock-agent";

fs::path Save(const Snapshot& s, const fs::path& base, const BeforeRenameHook& hook = {}) {
  const Task& t = s.execution_state.task;
  return SaveSnapshot(s, base, t.domain, kModel, t.task_id, hook);
}

Snapshot Simple(const std::string& label, std::int64_t step, const std::string& task_id = "task_7") {
  testing::Rng rng(step * 31 + label.size());
  Snapshot s = testing::RandomSnapshot(rng);
  s.execution_state.task.task_id = task_id;
  s.execution_state.lineage.iteration_label = label;
  s.iteration_label = label;
  s.step_count = step;
  s.id = SnapshotId(task_id, label, step);
  return s;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void Spit(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

TEST(SaveSnapshot, Layout) {
  TempDir dir;
  Snapshot s = Simple("1", 5);
  fs::path path = Save(s, dir.path());
  EXPECT_EQ(path, dir.path() / "mini-orders" / kModel / "task_7" / "iteration_1_step_5");
  EXPECT_TRUE(fs::exists(path / "state.bin"));
  EXPECT_TRUE(fs::exists(path / "metadata.json"));
  auto meta = nlohmann::json::parse(Slurp(path / "metadata.json"));
  EXPECT_EQ(meta["id"], "task_7/iteration_1_step_5");
  EXPECT_EQ(meta["iteration"], "1");
  EXPECT_EQ(meta["canonical_name"], "iteration_1_step:5");
  EXPECT_EQ(meta["created_at"], s.created_at);
  EXPECT_EQ(meta["dialogue"].size(), s.execution_state.messages.size());
  EXPECT_EQ(Slurp(path / "state.bin").substr(0, 4), "DVST");
}

TEST(SaveSnapshot, ModelNameIsSanitized) {
  TempDir dir;
  Snapshot s = Simple("1", 0);
  fs::path path = SaveSnapshot(s, dir.path(), "mini-orders", "org/model:v1", "task_7");
  EXPECT_EQ(path.parent_path().parent_path().filename(), "org_model_v1");
  EXPECT_DIVERT_ERROR(SaveSnapshot(s, dir.path(), "..", kModel, "task_7"),
                      ErrorCode::kInvalidArgument);
  EXPECT_DIVERT_ERROR(SaveSnapshot(s, dir.path(), "mini-orders", kModel, "a/b"),
                      ErrorCode::kInvalidArgument);
}

TEST(SaveSnapshot, IdempotentForIdenticalContent) {
  TempDir dir;
  Snapshot s = Simple("1", 5);
  fs::path a = Save(s, dir.path());
  // A later save with a different clock reading is still the same snapshot.
  Snapshot later = s;
  later.created_at = "2030-01-01T00:00:00Z";
  EXPECT_EQ(Save(later, dir.path()), a);
  EXPECT_EQ(LoadSnapshot(a).created_at, s.created_at);
}

TEST(SaveSnapshot, CollisionWithDifferentContent) {
  TempDir dir;
  Snapshot s = Simple("1", 5);
  Save(s, dir.path());
  Snapshot other = s;
  other.execution_state.agent_scratchpad += "changed";
  EXPECT_DIVERT_ERROR(Save(other, dir.path()), ErrorCode::kIntegrityError);
}

TEST(SaveSnapshot, RejectsInvalidLabel) {
  TempDir dir;
  Snapshot s = Simple("1", 5);
  s.iteration_label = "";
  EXPECT_DIVERT_ERROR(Save(s, dir.path()), ErrorCode::kInvalidArgument);
}

TEST(SaveSnapshot, UnwritableBase) {
  TempDir dir;
  fs::path file = dir.path() / "plain-file";
  Spit(file, "x");
  EXPECT_DIVERT_ERROR(Save(Simple("1", 0), file), ErrorCode::kStorageError);
}

TEST(SaveSnapshot, CrashBeforeRenameLeavesNothingVisible) {
  TempDir dir;
  Snapshot s = Simple("2", 3);
  fs::path seen_tmp;
  auto crash = [&](const fs::path& tmp, const fs::path&) {
    seen_tmp = tmp;
    EXPECT_TRUE(fs::exists(tmp / "state.bin"));
    throw std::runtime_error("injected crash");
  };
  EXPECT_THROW(Save(s, dir.path(), crash), std::runtime_error);
  fs::path task_dir = TaskSnapshotDir(dir.path(), "mini-orders", kModel, "task_7");
  EXPECT_FALSE(fs::exists(task_dir / "iteration_2_step_3"));
  EXPECT_FALSE(fs::exists(seen_tmp));
  ExperimentTree tree = ListTreeAt(task_dir);
  EXPECT_TRUE(tree.roots.empty());
  EXPECT_TRUE(tree.diagnostics.empty());
  // A retry after the crash succeeds.
  EXPECT_EQ(LoadSnapshot(Save(s, dir.path())), s);
}

TEST(SaveSnapshot, LeftoverTempDirectoriesAreIgnored) {
  TempDir dir;
  Save(Simple("1", 0), dir.path());
  fs::path task_dir = TaskSnapshotDir(dir.path(), "mini-orders", kModel, "task_7");
  fs::create_directory(task_dir / ".tmp-iteration_1_step_2-99-0");
  Spit(task_dir / ".tmp-iteration_1_step_2-99-0" / "state.bin", "partial");
  ExperimentTree tree = ListTreeAt(task_dir);
  ASSERT_EQ(tree.roots.size(), 1u);
  EXPECT_EQ(tree.roots[0].snapshots.size(), 1u);
  EXPECT_TRUE(tree.diagnostics.empty());
}

TEST(SaveSnapshot, ConcurrentWritersToDistinctPaths) {
  TempDir dir;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int step = 0; step < 10; ++step) Save(Simple(std::to_string(t + 1), step), dir.path());
      // Same content from another thread is fine too.
      Save(Simple("1", 0), dir.path());
    });
  }
  for (auto& th : threads) th.join();
  ExperimentTree tree = ListTree(dir.path(), "mini-orders", kModel, "task_7");
  ASSERT_EQ(tree.roots.size(), 4u);
  for (const TreeNode& root : tree.roots) EXPECT_EQ(root.snapshots.size(), 10u);
}

TEST(Snapshot, RoundTripProperty) {
  TempDir dir;
  testing::Rng rng(2026);
  for (int i = 0; i < 150; ++i) {
    Snapshot s = testing::RandomSnapshot(rng);
    // Fresh base per case so random ids never collide.
    fs::path base = dir.path() / std::to_string(i);
    Snapshot back = LoadSnapshot(Save(s, base));
    ASSERT_EQ(back, s) << "case " << i;
    Snapshot decoded = DecodeSnapshot(EncodeSnapshot(s));
    decoded.created_at = s.created_at;
    ASSERT_EQ(decoded, s);
  }
}

TEST(LoadSnapshot, TruncatedStateIsCorruption) {
  TempDir dir;
  fs::path path = Save(Simple("1", 4), dir.path());
  std::string bytes = Slurp(path / "state.bin");
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{8}, bytes.size() / 2,
                           bytes.size() - 1}) {
    Spit(path / "state.bin", bytes.substr(0, keep));
    EXPECT_DIVERT_ERROR(LoadSnapshot(path), ErrorCode::kCorruption);
  }
}

TEST(LoadSnapshot, FlippedByteIsCorruption) {
  TempDir dir;
  fs::path path = Save(Simple("1", 4), dir.path());
  std::string bytes = Slurp(path / "state.bin");
  for (std::size_t at = 8; at < bytes.size(); at += bytes.size() / 13 + 1) {
    std::string bad = bytes;
    bad[at] ^= 0x5a;
    Spit(path / "state.bin", bad);
    EXPECT_DIVERT_ERROR(LoadSnapshot(path), ErrorCode::kCorruption);
  }
  EXPECT_DIVERT_ERROR(DecodeSnapshot(bytes + "x"), ErrorCode::kCorruption);
}

TEST(LoadSnapshot, VersionMismatchIsMigration) {
  TempDir dir;
  fs::path path = Save(Simple("1", 4), dir.path());
  std::string bytes = Slurp(path / "state.bin");
  bytes[4] = 9;  // version field, little-endian
  try {
    DecodeSnapshot(bytes);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMigration);
    std::string what = e.what();
    EXPECT_NE(what.find('9'), std::string::npos);
    EXPECT_NE(what.find('1'), std::string::npos);
  }
}

TEST(LoadSnapshot, MetadataMismatchIsCorruption) {
  TempDir dir;
  fs::path path = Save(Simple("1", 4), dir.path());
  auto meta = nlohmann::json::parse(Slurp(path / "metadata.json"));
  for (const char* field : {"iteration", "id", "parent_id", "canonical_name"}) {
    auto bad = meta;
    bad[field] = "1_9";
    Spit(path / "metadata.json", bad.dump());
    SCOPED_TRACE(field);
    EXPECT_DIVERT_ERROR(LoadSnapshot(path), ErrorCode::kCorruption);
  }
  Spit(path / "metadata.json", "{not json");
  EXPECT_DIVERT_ERROR(LoadSnapshot(path), ErrorCode::kCorruption);
  fs::remove(path / "metadata.json");
  EXPECT_DIVERT_ERROR(LoadSnapshot(path), ErrorCode::kStorageError);
}

TEST(ParseSnapshotDirName, Grammar) {
  std::string label;
  std::int64_t step = -1;
  EXPECT_TRUE(ParseSnapshotDirName("iteration_1_2_step_7", &label, &step));
  EXPECT_EQ(label, "1_2");
  EXPECT_EQ(step, 7);
  for (const char* bad : {"iteration__step_1", "iteration_1_step_", "iteration_1_step_x",
                          "iteration_1_step_01", "iter_1_step_1", "iteration_1",
                          "iteration_1_step:1", "iteration_1234567890123456789_step_1"}) {
    EXPECT_FALSE(ParseSnapshotDirName(bad, &label, &step)) << bad;
  }
}

TEST(ListTree, BuildsForestFromLabels) {
  TempDir dir;
  for (const char* label : {"1", "2", "1_1", "1_2", "1_1_1", "1_10"}) Save(Simple(label, 0), dir.path());
  Save(Simple("1_1", 4), dir.path());
  ExperimentTree tree = ListTree(dir.path(), "mini-orders", kModel, "task_7");
  ASSERT_EQ(tree.roots.size(), 2u);
  const TreeNode& one = tree.roots[0];
  EXPECT_EQ(one.iteration_label, "1");
  ASSERT_EQ(one.children.size(), 3u);
  EXPECT_EQ(one.children[0].iteration_label, "1_1");
  EXPECT_EQ(one.children[1].iteration_label, "1_2");
  EXPECT_EQ(one.children[2].iteration_label, "1_10");
  ASSERT_EQ(one.children[0].children.size(), 1u);
  EXPECT_EQ(one.children[0].children[0].iteration_label, "1_1_1");
  EXPECT_EQ(one.children[0].snapshots.size(), 2u);
  EXPECT_EQ(one.children[0].snapshots[1].step, 4);
  EXPECT_EQ(tree.roots[1].iteration_label, "2");
  EXPECT_TRUE(tree.roots[1].children.empty());
  EXPECT_TRUE(tree.orphans.empty());
  EXPECT_EQ(tree.ParentMap().at("1_1_1"), "1_1");
  EXPECT_EQ(tree.ParentMap().at("2"), "");
}

TEST(ListTree, EmptyAndMissing) {
  TempDir dir;
  EXPECT_TRUE(ListTree(dir.path(), "mini-orders", kModel, "nothing").roots.empty());
  fs::create_directories(TaskSnapshotDir(dir.path(), "mini-orders", kModel, "task_7"));
  ExperimentTree tree = ListTree(dir.path(), "mini-orders", kModel, "task_7");
  EXPECT_TRUE(tree.roots.empty());
  EXPECT_TRUE(tree.orphans.empty());
  EXPECT_TRUE(tree.diagnostics.empty());
}

TEST(ListTree, OrphansAndDiagnostics) {
  TempDir dir;
  Save(Simple("1_3", 2), dir.path());
  Save(Simple("1_3_1", 4), dir.path());
  fs::path task_dir = TaskSnapshotDir(dir.path(), "mini-orders", kModel, "task_7");
  fs::create_directory(task_dir / "scratch");
  Spit(task_dir / "notes.txt", "x");
  ExperimentTree tree = ListTreeAt(task_dir);
  EXPECT_TRUE(tree.roots.empty());
  ASSERT_EQ(tree.orphans.size(), 1u);
  EXPECT_EQ(tree.orphans[0].iteration_label, "1_3");
  ASSERT_EQ(tree.orphans[0].children.size(), 1u);
  EXPECT_EQ(tree.ParentMap().at("1_3"), "1");
  EXPECT_EQ(tree.diagnostics.size(), 2u);
  EXPECT_NE(tree.Find("1_3_1"), nullptr);
  EXPECT_EQ(tree.Find("1"), nullptr);
}

TEST(PruneSnapshots, RemovesLabelAndDescendants) {
  TempDir dir;
  for (const char* label : {"1", "1_1", "1_1_2", "1_10", "11", "2"}) Save(Simple(label, 0), dir.path());
  fs::path task_dir = TaskSnapshotDir(dir.path(), "mini-orders", kModel, "task_7");
  EXPECT_EQ(PruneSnapshots(task_dir, "1_1"), 2u);
  ExperimentTree tree = ListTreeAt(task_dir);
  std::set<std::string> left;
  for (const auto& [label, parent] : tree.ParentMap()) left.insert(label);
  EXPECT_EQ(left, (std::set<std::string>{"1", "1_10", "11", "2"}));
  EXPECT_EQ(PruneSnapshots(task_dir, "1"), 2u);
  EXPECT_DIVERT_ERROR(PruneSnapshots(task_dir, "x"), ErrorCode::kInvalidArgument);
}

TEST(SnapshotStore, TreeMatchesRecordedLineage) {
  TempDir dir;
  SnapshotStore store(dir.path(), kModel);
  DivertOptions options;
  options.budget.rollouts = 3;
  options.budget.branches = 6;
  MockWorldOptions world;
  world.user_style = UserStyle::kStochastic;
  DivertResult result =
      RunDivert(testing::MiniOrders(), options, RunConfig{}, MakeMockProviders(world), &store);
  for (const Task& task : testing::MiniOrders()) {
    std::map<std::string, std::string> expected;
    for (const Trajectory& t : result.pool) {
      if (t.task_id == task.task_id) {
        expected[t.lineage.iteration_label] = t.lineage.parent_label.value_or("");
      }
    }
    ExperimentTree tree = ListTree(dir.path(), task.domain, kModel, task.task_id);
    EXPECT_EQ(tree.ParentMap(), expected) << task.task_id;
    EXPECT_TRUE(tree.orphans.empty());
    EXPECT_TRUE(tree.diagnostics.empty());
    // Every stored snapshot loads and belongs to its directory's label.
    std::vector<const TreeNode*> stack;
    for (const TreeNode& r : tree.roots) stack.push_back(&r);
    while (!stack.empty()) {
      const TreeNode* n = stack.back();
      stack.pop_back();
      for (const SnapshotRef& ref : n->snapshots) {
        Snapshot s = LoadSnapshot(ref.path);
        EXPECT_EQ(s.iteration_label, n->iteration_label);
        EXPECT_EQ(s.step_count, ref.step);
      }
      for (const TreeNode& c : n->children) stack.push_back(&c);
    }
  }
}

}  // namespace
}  // namespace divert
