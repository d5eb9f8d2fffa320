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

#include "divert/cli.h"

#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "divert/analysis.h"
#include "divert/envsim.h"
#include "divert/hash.h"
#include "divert/http_provider.h"
#include "divert/pool_io.h"
#include "divert/prompts.h"
#include "divert/snapshots.h"

namespace divert {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void ConfigFail(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kConfigError, field + ": " + what);
}

// Strict reader for one JSON object: typed optional lookups plus a final
// check that no unknown key was present.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) ConfigFail(Name(""), "expected an object");
  }

  const json* Find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void String(const char* key, std::string* out) {
    if (const json* v = Find(key)) {
      if (!v->is_string()) ConfigFail(Name(key), "expected a string");
      *out = v->get<std::string>();
    }
  }

  template <typename T>
  void Integer(const char* key, T* out) {
    if (const json* v = Find(key)) {
      if (!v->is_number_integer()) ConfigFail(Name(key), "expected an integer");
      if (std::is_unsigned_v<T> && v->is_number_integer() && !v->is_number_unsigned() &&
          v->get<std::int64_t>() < 0) {
        ConfigFail(Name(key), "must not be negative");
      }
      *out = v->get<T>();
    }
  }

  void Number(const char* key, double* out) {
    if (const json* v = Find(key)) {
      if (!v->is_number()) ConfigFail(Name(key), "expected a number");
      *out = v->get<double>();
    }
  }

  void Bool(const char* key, bool* out) {
    if (const json* v = Find(key)) {
      if (!v->is_boolean()) ConfigFail(Name(key), "expected true or false");
      *out = v->get<bool>();
    }
  }

  void Finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) ConfigFail(Name(item.key()), "unknown key");
    }
  }

  std::string Name(const std::string& key) const {
    if (path_.empty()) return key.empty() ? "config" : key;
    return key.empty() ? path_ : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ChargingRule ParseChargingRule(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  std::string kind = "whitespace";
  r.String("kind", &kind);
  ChargingRule rule;
  if (kind == "whitespace") {
    rule.kind = ChargingRule::Kind::kWhitespace;
  } else if (kind == "fixed") {
    rule.kind = ChargingRule::Kind::kFixed;
    r.Integer("prompt_tokens", &rule.fixed.prompt_tokens);
    r.Integer("completion_tokens", &rule.fixed.completion_tokens);
  } else {
    ConfigFail(path + ".kind", "expected \"whitespace\" or \"fixed\"");
  }
  r.Finish();
  return rule;
}

void ParseProvider(const json& j, ProviderConfig* p) {
  ObjectReader r(j, "provider");
  r.String("kind", &p->kind);
  if (p->kind != "mock" && p->kind != "http") {
    ConfigFail("provider.kind", "expected \"mock\" or \"http\"");
  }
  r.String("endpoint", &p->endpoint);
  r.Integer("timeout_seconds", &p->timeout_seconds);
  r.Integer("embedding_dimension", &p->embedding_dimension);
  if (const json* m = r.Find("models")) {
    ObjectReader mr(*m, "provider.models");
    mr.String("agent", &p->agent_model);
    mr.String("user", &p->user_model);
    mr.String("framework", &p->framework_model);
    mr.String("embedding", &p->embedding_model);
    mr.Finish();
  }
  if (const json* m = r.Find("mock")) {
    ObjectReader mr(*m, "provider.mock");
    mr.Integer("seed", &p->mock_seed);
    std::string style(UserStyleName(p->user_style));
    mr.String("user_style", &style);
    try {
      p->user_style = ParseUserStyle(style);
    } catch (const Error&) {
      ConfigFail("provider.mock.user_style", "unknown style '" + style + "'");
    }
    if (const json* c = mr.Find("charging")) {
      if (!c->is_object()) ConfigFail("provider.mock.charging", "expected an object");
      for (const auto& item : c->items()) {
        const std::string path = "provider.mock.charging." + item.key();
        RoleTag tag;
        try {
          tag = ParseRoleTag(item.key());
        } catch (const Error&) {
          ConfigFail(path, "unknown role");
        }
        p->charging[tag] = ParseChargingRule(item.value(), path);
      }
    }
    mr.Finish();
  }
  r.Finish();

  if (p->kind == "http" && p->endpoint.empty()) {
    ConfigFail("provider.endpoint", "required for the http provider");
  }
  if (p->timeout_seconds <= 0) ConfigFail("provider.timeout_seconds", "must be positive");
  if (p->embedding_dimension == 0) {
    ConfigFail("provider.embedding_dimension", "must be positive");
  }
  if (p->agent_model.empty()) ConfigFail("provider.models.agent", "must not be empty");
}

json ChargingToJson(const std::map<RoleTag, ChargingRule>& charging) {
  json out = json::object();
  for (const auto& [tag, rule] : charging) {
    json r;
    if (rule.kind == ChargingRule::Kind::kFixed) {
      r["kind"] = "fixed";
      r["prompt_tokens"] = rule.fixed.prompt_tokens;
      r["completion_tokens"] = rule.fixed.completion_tokens;
    } else {
      r["kind"] = "whitespace";
    }
    out[std::string(RoleTagName(tag))] = r;
  }
  return out;
}

fs::path Resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute() || base.empty()) return path;
  return base / path;
}

std::string PromptHash(std::string_view text) { return HexDigest(Fnv1a64(text)); }

std::vector<Task> LoadSuiteForConfig(const CliConfig& config) {
  try {
    return LoadTaskSuite(config.ResolvedSuitePath());
  } catch (const Error& e) {
    ConfigFail("suite_path", e.what());
  }
}

std::unique_ptr<Embedder> MakeEmbedder(const ProviderConfig& p) {
  if (p.kind == "http") {
    HttpEndpoint endpoint{p.endpoint, p.embedding_model, ApiKeyFromEnvironment(),
                          p.timeout_seconds};
    return std::make_unique<HttpEmbedder>(endpoint, p.embedding_dimension);
  }
  return std::make_unique<HashingEmbedder>(p.embedding_dimension);
}

// ---- Subcommands ----

struct Overrides {
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> rollouts;
  std::optional<std::int64_t> branches;
  std::optional<std::int64_t> candidates;
  std::optional<std::size_t> parallel;
  bool no_directed_generation = false;
  bool no_diverse_selection = false;
  std::string pool;
};

void ApplyOverrides(const Overrides& o, CliConfig* c) {
  if (o.seed) c->run.seed = *o.seed;
  if (o.rollouts) c->budget.rollouts = *o.rollouts;
  if (o.branches) c->budget.branches = *o.branches;
  if (o.candidates) c->budget.candidates = *o.candidates;
  if (o.parallel) c->parallel = *o.parallel;
  if (o.no_directed_generation) c->ablation.directed_generation = false;
  if (o.no_diverse_selection) c->ablation.diverse_selection = false;
  if (!o.pool.empty()) c->output_dir = o.pool;
  try {
    c->run.Validate();
    c->budget.Validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, std::string(e.what()) + " (after flag overrides)");
  }
  if (c->parallel == 0) ConfigFail("parallel", "must be at least 1");
}

int CmdRun(const std::string& command, const std::string& config_path,
           const Overrides& overrides, std::ostream& out) {
  CliConfig config = LoadCliConfig(config_path);
  if (command == "run") config.budget.branches = 0;
  ApplyOverrides(overrides, &config);
  if (command == "run" && config.budget.branches != 0) {
    ConfigFail("budget.branches", "`run` performs linear rollouts only; use `divert`");
  }
  const std::vector<Task> suite = LoadSuiteForConfig(config);

  const fs::path out_dir = config.ResolvedOutputDir();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw Error(ErrorCode::kStorageError,
                "cannot create output directory " + out_dir.string() + ": " + ec.message());
  }

  Providers providers = MakeProviders(config.provider);
  SnapshotStore store(config.ResolvedBaseDir(), config.provider.agent_model);
  DivertOptions options;
  options.budget = config.budget;
  options.ablation = config.ablation;
  options.parallel = config.parallel;
  DivertResult result = RunDivert(suite, options, config.run, providers, &store);

  WriteTrajectories(out_dir / kTrajectoriesFile, result.pool);
  WriteCandidateRecords(out_dir / kCandidatesFile, result.candidates);
  WriteTextFile(out_dir / kRunReportFile, result.report.ToJson().dump(2) + "\n");
  json manifest = BuildManifest(config, command, result.pool, result.candidates, result.report);
  WriteTextFile(out_dir / kManifestFile, manifest.dump(2) + "\n");

  out << command << ": " << result.pool.size() << " trajectories, "
      << result.candidates.size() << " candidate sets, " << result.report.BranchFailures()
      << " branch errors -> " << out_dir.string() << "\n";
  return kExitOk;
}

std::string WriteToString(void (*writer)(std::ostream&, const std::vector<Trajectory>&),
                          const std::vector<Trajectory>& pool) {
  std::ostringstream s;
  writer(s, pool);
  return s.str();
}

int CmdAnalyze(const std::string& pool_dir, const std::string& config_path, bool judge,
               std::ostream& out) {
  if (pool_dir.empty()) ConfigFail("--pool", "required");
  const fs::path dir(pool_dir);

  // The embedder and judge follow the configuration the pool was produced
  // with, unless one is given explicitly.
  std::optional<CliConfig> config;
  if (!config_path.empty()) {
    config = LoadCliConfig(config_path);
  } else if (fs::exists(dir / kManifestFile)) {
    json manifest;
    try {
      manifest = json::parse(ReadTextFile(dir / kManifestFile));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kSchemaError, "manifest.json: " + std::string(e.what()));
    }
    if (manifest.contains("config")) {
      config = ParseCliConfig(manifest["config"], manifest.value("config_dir", ""));
    }
  }

  const std::vector<Trajectory> pool = ReadTrajectories(dir / kTrajectoriesFile);
  std::vector<CandidateRecord> records;
  if (fs::exists(dir / kCandidatesFile)) records = ReadCandidateRecords(dir / kCandidatesFile);

  ProviderConfig provider = config ? config->provider : ProviderConfig{};
  std::unique_ptr<Embedder> embedder = MakeEmbedder(provider);

  MetricsReport metrics = ComputeMetrics(pool);
  PrefixReport prefix = SharedPrefixReport(pool);
  DiversityReport diversity = DiversityRankReport(records, *embedder);
  OverheadReport overhead = OverheadFromPool(pool, records);

  WriteTextFile(dir / kMetricsCsv, WriteToString(WriteMetricsCsv, pool));
  WriteTextFile(dir / kCoverageCsv, WriteToString(WriteCoverageCsv, pool));
  std::ostringstream prefix_csv;
  WritePrefixCsv(prefix_csv, prefix);
  WriteTextFile(dir / kPrefixCsv, prefix_csv.str());
  std::ostringstream diversity_csv;
  WriteDiversityCsv(diversity_csv, diversity);
  WriteTextFile(dir / kDiversityCsv, diversity_csv.str());

  json summary;
  summary["metrics"] = MetricsToJson(metrics);
  summary["shared_prefix"] = PrefixToJson(prefix);
  summary["diversity"] = DiversityToJson(diversity);
  summary["overhead"] = OverheadToJson(overhead);
  if (judge) {
    if (!config) ConfigFail("--config", "the judge needs a configuration");
    const std::vector<Task> suite = LoadSuiteForConfig(*config);
    Providers providers = MakeProviders(config->provider);
    JudgeSummary js =
        JudgeCandidates(records, suite, *providers.framework, config->run.max_retries);
    summary["judge"] = {{"judged", js.judged},
                        {"preserved", js.preserved},
                        {"unparseable", js.unparseable}};
  }
  WriteTextFile(dir / kSummaryFile, summary.dump(2) + "\n");

  out << "analyze: " << pool.size() << " trajectories, task_failure_count "
      << metrics.task_failure_count << ", errors_per_100k " << FormatDouble(metrics.errors_per_100k)
      << "\n";
  return kExitOk;
}

fs::path BaseDirFor(const std::string& config_path, const std::string& pool_dir) {
  if (!config_path.empty()) return LoadCliConfig(config_path).ResolvedBaseDir();
  if (pool_dir.empty()) ConfigFail("--config", "either --config or --pool is required");
  const fs::path dir(pool_dir);
  if (fs::exists(dir / kManifestFile)) {
    json manifest = json::parse(ReadTextFile(dir / kManifestFile), nullptr, false);
    if (manifest.is_object() && manifest.contains("base_dir") && manifest["base_dir"].is_string()) {
      return manifest["base_dir"].get<std::string>();
    }
  }
  return dir / "snapshots";
}

// Every <domain>/<model>/<task> directory under `base`, sorted.
std::vector<fs::path> TaskDirs(const fs::path& base) {
  std::vector<fs::path> dirs;
  if (!fs::is_directory(base)) return dirs;
  for (const auto& domain : fs::directory_iterator(base)) {
    if (!domain.is_directory()) continue;
    for (const auto& model : fs::directory_iterator(domain.path())) {
      if (!model.is_directory()) continue;
      for (const auto& task : fs::directory_iterator(model.path())) {
        if (task.is_directory()) dirs.push_back(task.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

void PrintNode(const TreeNode& node, int depth, std::ostream& out) {
  out << std::string(2 * depth + 2, ' ') << node.iteration_label << "  steps";
  for (std::size_t i = 0; i < node.snapshots.size(); ++i) {
    out << (i == 0 ? " " : ",") << node.snapshots[i].step;
  }
  out << "\n";
  for (const TreeNode& child : node.children) PrintNode(child, depth + 1, out);
}

int CmdInspect(const std::string& config_path, const std::string& pool_dir,
               const std::string& task_filter, std::ostream& out) {
  const fs::path base = BaseDirFor(config_path, pool_dir);
  std::vector<fs::path> dirs = TaskDirs(base);
  if (dirs.empty()) {
    out << "no snapshots under " << base.string() << "\n";
    return kExitOk;
  }
  for (const fs::path& task_dir : dirs) {
    if (!task_filter.empty() && task_dir.filename() != task_filter) continue;
    ExperimentTree tree = ListTreeAt(task_dir);
    out << fs::relative(task_dir, base).generic_string() << "\n";
    for (const TreeNode& root : tree.roots) PrintNode(root, 0, out);
    if (!tree.orphans.empty()) {
      out << "  orphans:\n";
      for (const TreeNode& node : tree.orphans) PrintNode(node, 1, out);
    }
    for (const TreeDiagnostic& d : tree.diagnostics) {
      out << "  ! " << d.entry << ": " << d.message << "\n";
    }
  }
  return kExitOk;
}

int CmdPrune(const std::string& config_path, const std::string& pool_dir,
             const std::string& task_id, const std::string& label, std::ostream& out) {
  if (!IsValidIterationLabel(label) || label.empty()) {
    ConfigFail("--label", "invalid iteration label '" + label + "'");
  }
  const fs::path base = BaseDirFor(config_path, pool_dir);
  std::size_t removed = 0;
  for (const fs::path& task_dir : TaskDirs(base)) {
    if (task_dir.filename() == task_id) removed += PruneSnapshots(task_dir, label);
  }
  out << "prune: removed " << removed << " snapshot directories for " << task_id << " label "
      << label << "\n";
  return kExitOk;
}

}  // namespace

fs::path CliConfig::ResolvedSuitePath() const { return Resolve(config_dir, suite_path); }

fs::path CliConfig::ResolvedOutputDir() const { return fs::path(output_dir); }

fs::path CliConfig::ResolvedBaseDir() const {
  if (base_dir.empty()) return ResolvedOutputDir() / "snapshots";
  return Resolve(config_dir, base_dir);
}

CliConfig ParseCliConfig(const json& document, const fs::path& config_dir) {
  CliConfig c;
  c.config_dir = config_dir;
  ObjectReader r(document, "");
  r.Integer("schema_version", &c.schema_version);
  if (c.schema_version != kConfigSchemaVersion) {
    ConfigFail("schema_version", "unsupported version " + std::to_string(c.schema_version));
  }
  r.String("suite_path", &c.suite_path);
  if (c.suite_path.empty()) ConfigFail("suite_path", "required");
  r.String("base_dir", &c.base_dir);
  r.String("output_dir", &c.output_dir);
  if (c.output_dir.empty()) ConfigFail("output_dir", "must not be empty");
  r.Integer("parallel", &c.parallel);
  if (c.parallel == 0) ConfigFail("parallel", "must be at least 1");

  if (const json* p = r.Find("provider")) ParseProvider(*p, &c.provider);
  if (const json* j = r.Find("run")) {
    ObjectReader rr(*j, "run");
    rr.Integer("seed", &c.run.seed);
    rr.Number("agent_temperature", &c.run.agent_temperature);
    rr.Number("user_temperature", &c.run.user_temperature);
    rr.Integer("max_steps", &c.run.max_steps);
    rr.Integer("max_errors", &c.run.max_errors);
    rr.Integer("max_retries", &c.run.max_retries);
    rr.Finish();
  }
  c.run.Validate();
  if (const json* j = r.Find("budget")) {
    ObjectReader br(*j, "budget");
    br.Integer("rollouts", &c.budget.rollouts);
    br.Integer("branches", &c.budget.branches);
    br.Integer("candidates", &c.budget.candidates);
    br.Integer("max_branch_depth", &c.budget.max_branch_depth);
    br.Finish();
  }
  c.budget.Validate();
  if (const json* j = r.Find("ablation")) {
    ObjectReader ar(*j, "ablation");
    ar.Bool("directed_generation", &c.ablation.directed_generation);
    ar.Bool("diverse_selection", &c.ablation.diverse_selection);
    ar.Bool("uniform_sampling", &c.ablation.uniform_sampling);
    ar.Bool("probe_continuations", &c.ablation.probe_continuations);
    ar.Finish();
  }
  r.Finish();
  return c;
}

CliConfig LoadCliConfig(const fs::path& path) {
  std::string text;
  try {
    text = ReadTextFile(path);
  } catch (const Error& e) {
    ConfigFail("config", "cannot read " + path.string());
  }
  json document;
  try {
    document = json::parse(text);
  } catch (const json::exception& e) {
    ConfigFail("config", "invalid JSON in " + path.string() + ": " + e.what());
  }
  return ParseCliConfig(document, path.parent_path());
}

json CliConfigToJson(const CliConfig& c) {
  const ProviderConfig& p = c.provider;
  json provider = {
      {"kind", p.kind},
      {"endpoint", p.endpoint},
      {"timeout_seconds", p.timeout_seconds},
      {"embedding_dimension", p.embedding_dimension},
      {"models",
       {{"agent", p.agent_model},
        {"user", p.user_model},
        {"framework", p.framework_model},
        {"embedding", p.embedding_model}}},
  };
  if (p.kind == "mock") {
    provider["mock"] = {{"seed", p.mock_seed},
                        {"user_style", std::string(UserStyleName(p.user_style))},
                        {"charging", ChargingToJson(p.charging)}};
  }
  return {
      {"schema_version", c.schema_version},
      {"suite_path", c.suite_path},
      {"base_dir", c.base_dir},
      {"output_dir", c.output_dir},
      {"parallel", c.parallel},
      {"provider", provider},
      {"run",
       {{"seed", c.run.seed},
        {"agent_temperature", c.run.agent_temperature},
        {"user_temperature", c.run.user_temperature},
        {"max_steps", c.run.max_steps},
        {"max_errors", c.run.max_errors},
        {"max_retries", c.run.max_retries}}},
      {"budget",
       {{"rollouts", c.budget.rollouts},
        {"branches", c.budget.branches},
        {"candidates", c.budget.candidates},
        {"max_branch_depth", c.budget.max_branch_depth}}},
      {"ablation",
       {{"directed_generation", c.ablation.directed_generation},
        {"diverse_selection", c.ablation.diverse_selection},
        {"uniform_sampling", c.ablation.uniform_sampling},
        {"probe_continuations", c.ablation.probe_continuations}}},
  };
}

std::string ConfigHash(const CliConfig& config) {
  // Where outputs go and the thread count do not change results.
  json j = CliConfigToJson(config);
  j.erase("parallel");
  j.erase("output_dir");
  j.erase("base_dir");
  return HexDigest(Fnv1a64(j.dump()));
}

Providers MakeProviders(const ProviderConfig& p) {
  if (p.kind == "mock") {
    MockWorldOptions options;
    options.seed = p.mock_seed;
    options.user_style = p.user_style;
    options.charging = p.charging;
    options.embedding_dimension = p.embedding_dimension;
    return MakeMockProviders(options);
  }
  const std::string key = ApiKeyFromEnvironment();
  auto endpoint = [&](const std::string& model) {
    return HttpEndpoint{p.endpoint, model, key, p.timeout_seconds};
  };
  Providers providers;
  providers.agent = std::make_shared<HttpChatProvider>(endpoint(p.agent_model));
  providers.user = std::make_shared<HttpChatProvider>(endpoint(p.user_model));
  providers.framework = std::make_shared<HttpChatProvider>(endpoint(p.framework_model));
  providers.embedder =
      std::make_shared<HttpEmbedder>(endpoint(p.embedding_model), p.embedding_dimension);
  return providers;
}

json BuildManifest(const CliConfig& config, std::string_view command,
                   const std::vector<Trajectory>& pool,
                   const std::vector<CandidateRecord>& candidates, const RunReport& report) {
  std::string suite_hash;
  try {
    suite_hash = HexDigest(Fnv1a64(ReadTextFile(config.ResolvedSuitePath())));
  } catch (const Error&) {
    suite_hash = "";
  }
  json prompts = {
      {"junction",
       {{"system", kJunctionSystemPrompt},
        {"template", kJunctionPromptTemplate},
        {"hash", PromptHash(std::string(kJunctionSystemPrompt) +
                            std::string(kJunctionPromptTemplate))}}},
      {"candidate",
       {{"system", kCandidateSystemTemplate},
        {"template", kCandidatePromptTemplate},
        {"hash", PromptHash(std::string(kCandidateSystemTemplate) +
                            std::string(kCandidatePromptTemplate))}}},
      {"judge",
       {{"system", kJudgeSystemPrompt},
        {"template", kJudgeUserTemplate},
        {"hash",
         PromptHash(std::string(kJudgeSystemPrompt) + std::string(kJudgeUserTemplate))}}},
  };
  return {
      {"tool", "divert"},
      {"version", kDivertVersion},
      {"command", command},
      {"config_hash", ConfigHash(config)},
      {"seed", config.run.seed},
      {"config", CliConfigToJson(config)},
      {"config_dir", config.config_dir.generic_string()},
      {"base_dir", config.ResolvedBaseDir().generic_string()},
      {"suite_hash", suite_hash},
      {"state_format_version", kStateFormatVersion},
      {"task_suite_schema_version", kTaskSuiteSchemaVersion},
      {"prompt_template_version", kPromptTemplateVersion},
      {"prompts", prompts},
      {"counts",
       {{"trajectories", pool.size()},
        {"candidate_sets", candidates.size()},
        {"branch_errors", report.BranchFailures()}}},
      {"outputs", {kTrajectoriesFile, kCandidatesFile, kRunReportFile}},
  };
}

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Snapshot-based, coverage-guided agent evaluation", "divert"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kDivertVersion);

  Overrides overrides;
  std::string config_path;
  std::string task_id;
  std::string label;
  bool judge = false;

  auto add_run_flags = [&](CLI::App* sub, bool branches) {
    sub->add_option("--config", config_path, "Configuration JSON")->required();
    sub->add_option("--pool", overrides.pool, "Output directory (overrides output_dir)");
    sub->add_option("--parallel", overrides.parallel, "Tasks run concurrently")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", overrides.seed, "Run seed");
    sub->add_option("--rollouts", overrides.rollouts, "Rollouts per task (R)");
    if (branches) sub->add_option("--branches", overrides.branches, "Branches per task (B)");
    sub->add_option("--candidates", overrides.candidates, "Candidates per branch (K)");
    sub->add_flag("--no-directed-generation", overrides.no_directed_generation,
                  "Let the user simulator regenerate the junction turn");
    sub->add_flag("--no-diverse-selection", overrides.no_diverse_selection,
                  "Inject the first candidate instead of the most divergent one");
  };

  CLI::App* run = app.add_subcommand("run", "Linear rollouts only");
  add_run_flags(run, false);
  CLI::App* divert = app.add_subcommand("divert", "Rollouts followed by branching");
  add_run_flags(divert, true);

  std::string pool_dir;
  CLI::App* analyze = app.add_subcommand("analyze", "Compute metrics and CSVs over a pool");
  analyze->add_option("--pool", pool_dir, "Pool directory")->required();
  analyze->add_option("--config", config_path, "Configuration (default: the pool manifest)");
  analyze->add_flag("--judge", judge, "Run the intent judge over injected candidates");

  CLI::App* inspect = app.add_subcommand("inspect", "Print experiment trees");
  inspect->add_option("--config", config_path, "Configuration JSON");
  inspect->add_option("--pool", pool_dir, "Pool directory");
  inspect->add_option("--task", task_id, "Only this task");

  CLI::App* prune = app.add_subcommand("prune", "Delete the snapshots of a label and its descendants");
  prune->add_option("--config", config_path, "Configuration JSON");
  prune->add_option("--pool", pool_dir, "Pool directory");
  prune->add_option("--task", task_id, "Task id")->required();
  prune->add_option("--label", label, "Iteration label")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, err, err);
    return kExitUsage;
  }

  try {
    if (run->parsed()) return CmdRun("run", config_path, overrides, out);
    if (divert->parsed()) return CmdRun("divert", config_path, overrides, out);
    if (analyze->parsed()) return CmdAnalyze(pool_dir, config_path, judge, out);
    if (inspect->parsed()) return CmdInspect(config_path, pool_dir, task_id, out);
    if (prune->parsed()) return CmdPrune(config_path, pool_dir, task_id, label, out);
  } catch (const Error& e) {
    err << "divert: " << e.what() << "\n";
    return e.code() == ErrorCode::kConfigError ? kExitUsage : kExitRunError;
  } catch (const std::exception& e) {
    err << "divert: " << e.what() << "\n";
    return kExitRunError;
  }
  return kExitUsage;
}

}  // namespace divert
