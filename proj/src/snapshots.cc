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

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "divert/hash.h"

namespace divert {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMagic = "DVST";

// Binary encoder --------------------------------------------------------------

class Writer {
 public:
  void U8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void U32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) U8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void U64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) U8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void I64(std::int64_t v) { U64(static_cast<std::uint64_t>(v)); }
  void F64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    U64(bits);
  }
  void Bool(bool v) { U8(v ? 1 : 0); }
  void Str(std::string_view s) {
    U64(s.size());
    out_.append(s);
  }
  void Raw(std::string_view s) { out_.append(s); }

  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint8_t U8() {
    Need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t U32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(U8()) << (8 * i);
    return v;
  }
  std::uint64_t U64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(U8()) << (8 * i);
    return v;
  }
  std::int64_t I64() { return static_cast<std::int64_t>(U64()); }
  double F64() {
    std::uint64_t bits = U64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  bool Bool() {
    std::uint8_t v = U8();
    if (v > 1) Fail("bad boolean");
    return v == 1;
  }
  std::string Str() {
    std::uint64_t n = U64();
    Need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  // Element count for a container; bounded by the remaining bytes so a
  // corrupt length cannot trigger a huge allocation.
  std::uint64_t Count() {
    std::uint64_t n = U64();
    if (n > in_.size() - pos_) Fail("container length exceeds payload");
    return n;
  }
  template <typename E>
  E Enum(int max_value) {
    std::uint8_t v = U8();
    if (v > max_value) Fail("enum value out of range");
    return static_cast<E>(v);
  }

  bool AtEnd() const { return pos_ == in_.size(); }
  [[noreturn]] void Fail(const std::string& what) const {
    throw Error(ErrorCode::kCorruption,
                "state payload: " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void Need(std::uint64_t n) const {
    if (n > in_.size() - pos_) Fail("truncated");
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

template <typename T, typename F>
void PutOptional(Writer& w, const std::optional<T>& v, F put) {
  w.Bool(v.has_value());
  if (v) put(*v);
}

template <typename T, typename F>
std::optional<T> GetOptional(Reader& r, F get) {
  if (!r.Bool()) return std::nullopt;
  return get();
}

void PutScalar(Writer& w, const Scalar& v) {
  w.U8(static_cast<std::uint8_t>(v.index()));
  if (const auto* i = std::get_if<std::int64_t>(&v)) {
    w.I64(*i);
  } else if (const auto* d = std::get_if<double>(&v)) {
    w.F64(*d);
  } else {
    w.Str(std::get<std::string>(v));
  }
}

Scalar GetScalar(Reader& r) {
  switch (r.U8()) {
    case 0:
      return r.I64();
    case 1:
      return r.F64();
    case 2:
      return r.Str();
    default:
      r.Fail("bad scalar tag");
  }
}

void PutFields(Writer& w, const FieldMap& m) {
  w.U64(m.size());
  for (const auto& [k, v] : m) {
    w.Str(k);
    PutScalar(w, v);
  }
}

FieldMap GetFields(Reader& r) {
  FieldMap m;
  for (std::uint64_t n = r.Count(); n > 0; --n) {
    std::string key = r.Str();
    m.emplace(std::move(key), GetScalar(r));
  }
  return m;
}

void PutEnv(Writer& w, const EnvState& env) {
  w.U64(env.tables.size());
  for (const auto& [table, records] : env.tables) {
    w.Str(table);
    w.U64(records.size());
    for (const auto& [id, fields] : records) {
      w.Str(id);
      PutFields(w, fields);
    }
  }
}

EnvState GetEnv(Reader& r) {
  EnvState env;
  for (std::uint64_t n = r.Count(); n > 0; --n) {
    auto& records = env.tables[r.Str()];
    for (std::uint64_t k = r.Count(); k > 0; --k) {
      std::string id = r.Str();
      records[id] = GetFields(r);
    }
  }
  return env;
}

void PutUsage(Writer& w, const TokenUsage& u) {
  w.U64(u.prompt_tokens);
  w.U64(u.completion_tokens);
}

TokenUsage GetUsage(Reader& r) {
  TokenUsage u;
  u.prompt_tokens = r.U64();
  u.completion_tokens = r.U64();
  return u;
}

void PutMessage(Writer& w, const Message& m) {
  w.U64(m.index);
  w.U8(static_cast<std::uint8_t>(m.role));
  w.Str(m.content);
  PutOptional(w, m.tool_call, [&](const ToolCall& c) {
    w.Str(c.name);
    PutFields(w, c.arguments);
  });
  PutOptional(w, m.tool_result, [&](const std::string& s) { w.Str(s); });
  PutUsage(w, m.tokens);
}

Message GetMessage(Reader& r) {
  Message m;
  m.index = r.U64();
  m.role = r.Enum<Role>(static_cast<int>(Role::kTool));
  m.content = r.Str();
  m.tool_call = GetOptional<ToolCall>(r, [&] {
    ToolCall c;
    c.name = r.Str();
    c.arguments = GetFields(r);
    return c;
  });
  m.tool_result = GetOptional<std::string>(r, [&] { return r.Str(); });
  m.tokens = GetUsage(r);
  return m;
}

void PutAugmentation(Writer& w, const Augmentation& a) {
  w.Str(a.original_message);
  w.Str(a.modified_message);
  w.U64(a.junction_index);
  w.Str(a.junction_reason);
  PutUsage(w, a.overhead);
}

Augmentation GetAugmentation(Reader& r) {
  Augmentation a;
  a.original_message = r.Str();
  a.modified_message = r.Str();
  a.junction_index = r.U64();
  a.junction_reason = r.Str();
  a.overhead = GetUsage(r);
  return a;
}

void PutStrings(Writer& w, const std::vector<std::string>& v) {
  w.U64(v.size());
  for (const auto& s : v) w.Str(s);
}

std::vector<std::string> GetStrings(Reader& r) {
  std::vector<std::string> v;
  for (std::uint64_t n = r.Count(); n > 0; --n) v.push_back(r.Str());
  return v;
}

void PutTask(Writer& w, const Task& t) {
  w.Str(t.task_id);
  w.Str(t.domain);
  w.Str(t.user_instructions);
  w.Str(t.purpose);
  PutEnv(w, t.initial_env);
  w.U64(t.expected_final.checks.size());
  for (const FieldCheck& c : t.expected_final.checks) {
    w.Str(c.table);
    w.Str(c.record_id);
    w.Str(c.field);
    PutScalar(w, c.equals);
  }
  PutStrings(w, t.tool_names);
}

Task GetTask(Reader& r) {
  Task t;
  t.task_id = r.Str();
  t.domain = r.Str();
  t.user_instructions = r.Str();
  t.purpose = r.Str();
  t.initial_env = GetEnv(r);
  for (std::uint64_t n = r.Count(); n > 0; --n) {
    FieldCheck c;
    c.table = r.Str();
    c.record_id = r.Str();
    c.field = r.Str();
    c.equals = GetScalar(r);
    t.expected_final.checks.push_back(std::move(c));
  }
  t.tool_names = GetStrings(r);
  return t;
}

void PutLedger(Writer& w, const TokenLedger& l) {
  PutUsage(w, l.agent);
  PutUsage(w, l.user);
  PutUsage(w, l.junction_overhead);
  PutUsage(w, l.candidate_overhead);
}

TokenLedger GetLedger(Reader& r) {
  TokenLedger l;
  l.agent = GetUsage(r);
  l.user = GetUsage(r);
  l.junction_overhead = GetUsage(r);
  l.candidate_overhead = GetUsage(r);
  return l;
}

void PutState(Writer& w, const ExecutionState& s) {
  PutTask(w, s.task);
  PutEnv(w, s.env);
  w.U64(s.messages.size());
  for (const Message& m : s.messages) PutMessage(w, m);
  w.U8(static_cast<std::uint8_t>(s.from_role));
  w.U8(static_cast<std::uint8_t>(s.to_role));
  PutOptional(w, s.pending_message, [&](const Message& m) { PutMessage(w, m); });
  PutOptional(w, s.pending_augmentation,
              [&](const Augmentation& a) { PutAugmentation(w, a); });
  w.I64(s.step_count);
  w.I64(s.error_count);
  w.Bool(s.done);
  PutOptional(w, s.termination_reason,
              [&](TerminationReason t) { w.U8(static_cast<std::uint8_t>(t)); });
  w.I64(s.seed);
  PutLedger(w, s.ledger);
  w.Str(s.lineage.iteration_label);
  PutOptional(w, s.lineage.parent_label, [&](const std::string& v) { w.Str(v); });
  PutOptional(w, s.lineage.junction_index, [&](std::size_t v) { w.U64(v); });
  PutOptional(w, s.lineage.junction_reason, [&](const std::string& v) { w.Str(v); });
  w.Str(s.agent_scratchpad);
  w.Str(s.user_context);
  PutOptional(w, s.last_snapshot_id, [&](const std::string& v) { w.Str(v); });
}

ExecutionState GetState(Reader& r) {
  ExecutionState s;
  s.task = GetTask(r);
  s.env = GetEnv(r);
  for (std::uint64_t n = r.Count(); n > 0; --n) s.messages.push_back(GetMessage(r));
  s.from_role = r.Enum<Role>(static_cast<int>(Role::kTool));
  s.to_role = r.Enum<Role>(static_cast<int>(Role::kTool));
  s.pending_message = GetOptional<Message>(r, [&] { return GetMessage(r); });
  s.pending_augmentation =
      GetOptional<Augmentation>(r, [&] { return GetAugmentation(r); });
  s.step_count = r.I64();
  s.error_count = r.I64();
  s.done = r.Bool();
  s.termination_reason = GetOptional<TerminationReason>(r, [&] {
    return r.Enum<TerminationReason>(static_cast<int>(TerminationReason::kProviderError));
  });
  s.seed = r.I64();
  s.ledger = GetLedger(r);
  s.lineage.iteration_label = r.Str();
  s.lineage.parent_label = GetOptional<std::string>(r, [&] { return r.Str(); });
  s.lineage.junction_index = GetOptional<std::size_t>(r, [&] { return r.U64(); });
  s.lineage.junction_reason = GetOptional<std::string>(r, [&] { return r.Str(); });
  s.agent_scratchpad = r.Str();
  s.user_context = r.Str();
  s.last_snapshot_id = GetOptional<std::string>(r, [&] { return r.Str(); });
  return s;
}

// Filesystem helpers ----------------------------------------------------------

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kStorageError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::kStorageError, "cannot read " + path.string());
  return ss.str();
}

void WriteFile(const fs::path& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw Error(ErrorCode::kStorageError, "cannot write " + path.string());
}

void CheckComponent(std::string_view what, std::string_view value) {
  if (value.empty() || value == "." || value == ".." ||
      value.find_first_of("/\\") != std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " is not a safe path component: '" +
                    std::string(value) + "'");
  }
}

// Model names such as "org/model:tag" are flattened to one component.
std::string SanitizeModel(std::string_view model) {
  std::string out(model);
  for (char& c : out) {
    if (c == '/' || c == '\\' || c == ':') c = '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::string TempSuffix() {
  static std::atomic<std::uint64_t> counter{0};
  return std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1));
}

bool IsTempName(std::string_view name) { return name.rfind(".tmp-", 0) == 0; }

std::string OptionalString(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  return j[key].get<std::string>();
}

}  // namespace

std::string EncodeSnapshot(const Snapshot& s) {
  Writer w;
  w.Raw(kMagic);
  w.U32(kStateFormatVersion);
  w.Str(s.id);
  PutOptional(w, s.parent_id, [&](const std::string& v) { w.Str(v); });
  w.Str(s.iteration_label);
  w.I64(s.step_count);
  w.I64(s.seed);
  PutOptional(w, s.augmentation, [&](const Augmentation& a) { PutAugmentation(w, a); });
  PutState(w, s.execution_state);
  std::uint64_t checksum = Fnv1a64(w.bytes());
  w.U64(checksum);
  return std::move(w.bytes());
}

Snapshot DecodeSnapshot(std::string_view bytes) {
  constexpr std::size_t kHeader = 4 + 4;
  if (bytes.size() < kHeader + 8) {
    throw Error(ErrorCode::kCorruption, "state payload truncated: " +
                                            std::to_string(bytes.size()) + " bytes");
  }
  if (bytes.substr(0, 4) != kMagic) {
    throw Error(ErrorCode::kCorruption, "state payload has a bad magic number");
  }
  Reader header(bytes.substr(4, 4));
  std::uint32_t version = header.U32();
  if (version != kStateFormatVersion) {
    throw Error(ErrorCode::kMigration,
                "state payload version " + std::to_string(version) +
                    " cannot be read by format version " +
                    std::to_string(kStateFormatVersion));
  }
  std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader trailer(bytes.substr(bytes.size() - 8));
  if (trailer.U64() != Fnv1a64(body)) {
    throw Error(ErrorCode::kCorruption, "state payload checksum mismatch");
  }
  Reader r(body.substr(kHeader));
  Snapshot s;
  s.id = r.Str();
  s.parent_id = GetOptional<std::string>(r, [&] { return r.Str(); });
  s.iteration_label = r.Str();
  s.step_count = r.I64();
  s.seed = r.I64();
  s.augmentation = GetOptional<Augmentation>(r, [&] { return GetAugmentation(r); });
  s.execution_state = GetState(r);
  if (!r.AtEnd()) r.Fail("trailing bytes");
  return s;
}

nlohmann::json SnapshotMetadata(const Snapshot& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["parent_id"] = s.parent_id ? nlohmann::json(*s.parent_id) : nlohmann::json(nullptr);
  j["iteration"] = s.iteration_label;
  j["step"] = s.step_count;
  j["canonical_name"] = CanonicalSnapshotName(s.iteration_label, s.step_count);
  j["task_id"] = s.execution_state.task.task_id;
  j["seed"] = s.seed;
  j["dialogue"] = s.execution_state.messages;
  j["augmentation"] =
      s.augmentation ? nlohmann::json(*s.augmentation) : nlohmann::json(nullptr);
  j["created_at"] = s.created_at;
  j["format_version"] = kStateFormatVersion;
  return j;
}

fs::path TaskSnapshotDir(const fs::path& base_dir, std::string_view domain,
                         std::string_view model, std::string_view task_id) {
  CheckComponent("domain", domain);
  CheckComponent("task id", task_id);
  return base_dir / std::string(domain) / SanitizeModel(model) / std::string(task_id);
}

fs::path SaveSnapshot(const Snapshot& snapshot, const fs::path& base_dir,
                      std::string_view domain, std::string_view model,
                      std::string_view task_id, const BeforeRenameHook& before_rename) {
  if (!IsValidIterationLabel(snapshot.iteration_label)) {
    throw Error(ErrorCode::kInvalidArgument,
                "snapshot has invalid iteration label '" + snapshot.iteration_label + "'");
  }
  const fs::path task_dir = TaskSnapshotDir(base_dir, domain, model, task_id);
  const fs::path final_dir =
      task_dir / SnapshotDirName(snapshot.iteration_label, snapshot.step_count);
  const std::string state = EncodeSnapshot(snapshot);

  auto check_existing = [&]() -> bool {
    std::error_code ec;
    if (!fs::exists(final_dir, ec)) return false;
    if (ReadFile(final_dir / kStateFileName) != state) {
      throw Error(ErrorCode::kIntegrityError,
                  "snapshot " + final_dir.string() + " exists with different content");
    }
    return true;
  };

  try {
    if (check_existing()) return final_dir;
    fs::create_directories(task_dir);
    const fs::path tmp = task_dir / (".tmp-" + final_dir.filename().string() + "-" +
                                     TempSuffix());
    fs::create_directory(tmp);
    try {
      WriteFile(tmp / kStateFileName, state);
      WriteFile(tmp / kMetadataFileName, SnapshotMetadata(snapshot).dump(2) + "\n");
      if (before_rename) before_rename(tmp, final_dir);
      std::error_code ec;
      fs::rename(tmp, final_dir, ec);
      if (ec) {
        // Lost a race against an identical writer, or a real failure.
        fs::remove_all(tmp);
        if (check_existing()) return final_dir;
        throw Error(ErrorCode::kStorageError,
                    "cannot publish " + final_dir.string() + ": " + ec.message());
      }
    } catch (...) {
      std::error_code ignored;
      fs::remove_all(tmp, ignored);
      throw;
    }
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::kStorageError, e.what());
  }
  return final_dir;
}

Snapshot LoadSnapshot(const fs::path& dir) {
  const fs::path state_path = dir / kStateFileName;
  const fs::path meta_path = dir / kMetadataFileName;
  if (!fs::exists(state_path) || !fs::exists(meta_path)) {
    throw Error(ErrorCode::kStorageError,
                "snapshot " + dir.string() + " is missing state.bin or metadata.json");
  }
  Snapshot s = DecodeSnapshot(ReadFile(state_path));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(ReadFile(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruption, "metadata.json: " + std::string(e.what()));
  }
  auto mismatch = [&](const std::string& field) {
    return Error(ErrorCode::kCorruption,
                 "metadata.json disagrees with state.bin on " + field + " in " +
                     dir.string());
  };
  try {
    if (meta.value("id", std::string()) != s.id) throw mismatch("id");
    if (OptionalString(meta, "parent_id") != s.parent_id.value_or("")) {
      throw mismatch("parent_id");
    }
    if (meta.value("iteration", std::string()) != s.iteration_label) {
      throw mismatch("iteration");
    }
    if (meta.contains("canonical_name") &&
        meta["canonical_name"] != CanonicalSnapshotName(s.iteration_label, s.step_count)) {
      throw mismatch("canonical_name");
    }
  } catch (const nlohmann::json::exception&) {
    throw mismatch("field types");
  }
  s.created_at = OptionalString(meta, "created_at");
  if (s.execution_state.lineage.iteration_label != s.iteration_label) {
    throw Error(ErrorCode::kCorruption,
                "state.bin label disagrees with its execution state in " + dir.string());
  }
  return s;
}

bool ParseSnapshotDirName(std::string_view name, std::string* label, std::int64_t* step) {
  constexpr std::string_view kPrefix = "iteration_";
  constexpr std::string_view kStep = "_step_";
  if (name.rfind(kPrefix, 0) != 0) return false;
  std::size_t at = name.rfind(kStep);
  if (at == std::string_view::npos || at < kPrefix.size()) return false;
  std::string_view lab = name.substr(kPrefix.size(), at - kPrefix.size());
  std::string_view num = name.substr(at + kStep.size());
  if (!IsValidIterationLabel(lab) || num.empty()) return false;
  // Each child index must fit an int64 (at most 18 digits keeps it simple).
  std::size_t run = 0;
  for (char c : lab) {
    run = c == '_' ? 0 : run + 1;
    if (run > 18) return false;
  }
  if (num.size() > 1 && num[0] == '0') return false;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), value);
  if (ec != std::errc() || ptr != num.data() + num.size() || value < 0) return false;
  *label = std::string(lab);
  *step = value;
  return true;
}

namespace {

// Orders labels by their numeric child index path.
bool LabelLess(const std::string& a, const std::string& b) {
  auto parts = [](const std::string& s) {
    std::vector<std::int64_t> out;
    std::size_t start = 0;
    while (start <= s.size()) {
      std::size_t end = s.find('_', start);
      if (end == std::string::npos) end = s.size();
      out.push_back(std::stoll(s.substr(start, end - start)));
      start = end + 1;
    }
    return out;
  };
  return parts(a) < parts(b);
}

TreeNode BuildNode(const std::string& label,
                   const std::map<std::string, std::vector<SnapshotRef>>& refs,
                   const std::map<std::string, std::vector<std::string>>& kids) {
  TreeNode node;
  node.iteration_label = label;
  node.snapshots = refs.at(label);
  auto it = kids.find(label);
  if (it != kids.end()) {
    for (const auto& child : it->second) node.children.push_back(BuildNode(child, refs, kids));
  }
  return node;
}

void CollectParents(const TreeNode& node, const std::string& parent,
                    std::map<std::string, std::string>* out) {
  (*out)[node.iteration_label] = parent;
  for (const auto& c : node.children) CollectParents(c, node.iteration_label, out);
}

const TreeNode* FindIn(const std::vector<TreeNode>& nodes, std::string_view label) {
  for (const auto& n : nodes) {
    if (n.iteration_label == label) return &n;
    if (const TreeNode* hit = FindIn(n.children, label)) return hit;
  }
  return nullptr;
}

}  // namespace

std::map<std::string, std::string> ExperimentTree::ParentMap() const {
  std::map<std::string, std::string> out;
  for (const auto& r : roots) CollectParents(r, "", &out);
  for (const auto& o : orphans) {
    CollectParents(o, ParseIterationLabel(o.iteration_label).parent_label, &out);
  }
  return out;
}

const TreeNode* ExperimentTree::Find(std::string_view label) const {
  if (const TreeNode* n = FindIn(roots, label)) return n;
  return FindIn(orphans, label);
}

ExperimentTree ListTreeAt(const fs::path& task_dir) {
  ExperimentTree tree;
  std::error_code ec;
  if (!fs::is_directory(task_dir, ec)) return tree;
  std::map<std::string, std::vector<SnapshotRef>> refs;
  std::vector<std::string> entries;
  for (const auto& entry : fs::directory_iterator(task_dir)) {
    entries.push_back(entry.path().filename().string());
  }
  std::sort(entries.begin(), entries.end());
  for (const std::string& name : entries) {
    if (IsTempName(name)) continue;
    std::string label;
    std::int64_t step = 0;
    if (!fs::is_directory(task_dir / name, ec)) {
      tree.diagnostics.push_back({name, "not a snapshot directory"});
      continue;
    }
    if (!ParseSnapshotDirName(name, &label, &step)) {
      tree.diagnostics.push_back({name, "unparseable snapshot directory name"});
      continue;
    }
    refs[label].push_back({step, task_dir / name});
  }
  std::map<std::string, std::vector<std::string>> kids;
  std::vector<std::string> roots;
  std::vector<std::string> orphans;
  for (auto& [label, list] : refs) {
    std::sort(list.begin(), list.end(),
              [](const SnapshotRef& a, const SnapshotRef& b) { return a.step < b.step; });
    std::string parent = ParseIterationLabel(label).parent_label;
    if (parent.empty()) {
      roots.push_back(label);
    } else if (refs.count(parent) != 0) {
      kids[parent].push_back(label);
    } else {
      orphans.push_back(label);
    }
  }
  for (auto& [_, list] : kids) std::sort(list.begin(), list.end(), LabelLess);
  std::sort(roots.begin(), roots.end(), LabelLess);
  std::sort(orphans.begin(), orphans.end(), LabelLess);
  for (const auto& r : roots) tree.roots.push_back(BuildNode(r, refs, kids));
  for (const auto& o : orphans) tree.orphans.push_back(BuildNode(o, refs, kids));
  return tree;
}

ExperimentTree ListTree(const fs::path& base_dir, std::string_view domain,
                        std::string_view model, std::string_view task_id) {
  return ListTreeAt(TaskSnapshotDir(base_dir, domain, model, task_id));
}

std::size_t PruneSnapshots(const fs::path& task_dir, std::string_view label) {
  if (!IsValidIterationLabel(label)) {
    throw Error(ErrorCode::kInvalidArgument,
                "invalid iteration label '" + std::string(label) + "'");
  }
  std::error_code ec;
  if (!fs::is_directory(task_dir, ec)) return 0;
  const std::string prefix = std::string(label) + "_";
  std::vector<fs::path> doomed;
  for (const auto& entry : fs::directory_iterator(task_dir)) {
    std::string name = entry.path().filename().string();
    std::string found;
    std::int64_t step = 0;
    if (!ParseSnapshotDirName(name, &found, &step)) continue;
    if (found == label || found.rfind(prefix, 0) == 0) doomed.push_back(entry.path());
  }
  try {
    for (const auto& p : doomed) fs::remove_all(p);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::kStorageError, e.what());
  }
  return doomed.size();
}

std::string SnapshotStore::Save(const Snapshot& snapshot) {
  const Task& task = snapshot.execution_state.task;
  return SaveSnapshot(snapshot, base_dir_, task.domain, model_, task.task_id, before_rename_)
      .string();
}

}  // namespace divert
