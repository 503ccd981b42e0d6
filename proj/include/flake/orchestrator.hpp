#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "flake/data.hpp"
#include "flake/error.hpp"
#include "flake/gram.hpp"
#include "flake/masking.hpp"
#include "flake/net.hpp"
#include "flake/protocol.hpp"
#include "flake/registry.hpp"
#include "flake/report.hpp"
#include "flake/svm.hpp"

namespace flake {

/// One desk-scale experiment: parties, data shape, kernel grid, and mode.
struct ExperimentConfig {
  std::size_t parties = 3;
  std::size_t samples_per_party = 300;
  std::size_t features = 20;
  std::size_t classes = 2;
  std::size_t k = 40;
  KernelSpec kernel;
  std::vector<double> c_grid;    // empty: default grid
  std::vector<int> degree_grid;  // empty: default grid
  std::uint64_t seed = 1;
  double separation = 2.0;
  std::string mode = "both";  // federated | naive | both
  std::string output_path;    // consumed by the CLI layer; empty: no file
  std::size_t folds = 5;
  std::size_t chunk_rows = 256;
  double timeout_s = 30.0;

  bool operator==(const ExperimentConfig&) const = default;
};

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.mode != "federated" && cfg.mode != "naive" && cfg.mode != "both") {
    throw ValidationError("mode must be federated, naive, or both, got '" + cfg.mode + "'");
  }
  if (cfg.mode != "naive" && cfg.parties < 2) {
    throw ValidationError("federated experiments need at least 2 parties");
  }
  if (cfg.parties < 1) throw ValidationError("need at least 1 party");
  if (cfg.classes < 2) throw ValidationError("need at least 2 classes");
  if (cfg.samples_per_party < cfg.classes * 5) {
    throw ValidationError("samples_per_party must be at least classes*5 for stratified folds");
  }
  if (cfg.features < 1 || cfg.k <= cfg.features) {
    throw ValidationError("mask width k must exceed the feature count");
  }
  if (cfg.folds < 2) throw ValidationError("cross-validation needs at least 2 folds");
}

inline void to_json(nlohmann::json& j, const KernelSpec& k) {
  const char* kind = k.kind == KernelSpec::Kind::linear        ? "linear"
                     : k.kind == KernelSpec::Kind::polynomial ? "polynomial"
                                                              : "rbf";
  j = nlohmann::json{{"kind", kind}, {"v", k.v}, {"p", k.p}, {"sigma", k.sigma}};
}

inline void from_json(const nlohmann::json& j, KernelSpec& k) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear") {
    k.kind = KernelSpec::Kind::linear;
  } else if (kind == "polynomial") {
    k.kind = KernelSpec::Kind::polynomial;
  } else if (kind == "rbf") {
    k.kind = KernelSpec::Kind::rbf;
  } else {
    throw ValidationError("unknown kernel kind '" + kind + "'");
  }
  j.at("v").get_to(k.v);
  j.at("p").get_to(k.p);
  j.at("sigma").get_to(k.sigma);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"parties", c.parties},
                     {"samples_per_party", c.samples_per_party},
                     {"features", c.features},
                     {"classes", c.classes},
                     {"k", c.k},
                     {"kernel", c.kernel},
                     {"c_grid", c.c_grid},
                     {"degree_grid", c.degree_grid},
                     {"seed", c.seed},
                     {"separation", c.separation},
                     {"mode", c.mode},
                     {"output_path", c.output_path},
                     {"folds", c.folds},
                     {"chunk_rows", c.chunk_rows},
                     {"timeout_s", c.timeout_s}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const ExperimentConfig defaults;
  c.parties = j.value("parties", defaults.parties);
  c.samples_per_party = j.value("samples_per_party", defaults.samples_per_party);
  c.features = j.value("features", defaults.features);
  c.classes = j.value("classes", defaults.classes);
  c.k = j.value("k", defaults.k);
  if (j.contains("kernel")) j.at("kernel").get_to(c.kernel);
  c.c_grid = j.value("c_grid", defaults.c_grid);
  c.degree_grid = j.value("degree_grid", defaults.degree_grid);
  c.seed = j.value("seed", defaults.seed);
  c.separation = j.value("separation", defaults.separation);
  c.mode = j.value("mode", defaults.mode);
  c.output_path = j.value("output_path", defaults.output_path);
  c.folds = j.value("folds", defaults.folds);
  c.chunk_rows = j.value("chunk_rows", defaults.chunk_rows);
  c.timeout_s = j.value("timeout_s", defaults.timeout_s);
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed config file " + path + ": " + e.what());
  }
}

namespace orcdetail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline std::string party_id(std::size_t index) { return "p" + std::to_string(index); }

inline std::uint64_t secret_seed(const ExperimentConfig& cfg, std::size_t index) {
  return mix64(cfg.seed ^ 0x5EC7E75EEDULL) + index;
}

inline std::uint64_t private_seed(const ExperimentConfig& cfg, std::size_t index) {
  return mix64(cfg.seed ^ 0x1EF7149E55ULL) + index;
}

/// Contiguous per-party row ranges; remainders go to the first parties.
inline std::pair<std::size_t, std::size_t> party_slice(std::size_t total, std::size_t parties,
                                                       std::size_t index) {
  const std::size_t base = total / parties;
  const std::size_t rem = total % parties;
  const std::size_t count = base + (index < rem ? 1 : 0);
  const std::size_t begin = base * index + std::min(index, rem);
  return {begin, count};
}

inline CvOptions cv_options(const ExperimentConfig& cfg) {
  CvOptions opts;
  opts.folds = cfg.folds;
  opts.shuffle_seed = cfg.seed;
  if (cfg.kernel.kind == KernelSpec::Kind::polynomial) opts.poly_offset = cfg.kernel.v;
  return opts;
}

inline std::vector<double> effective_c_grid(const ExperimentConfig& cfg) {
  return cfg.c_grid.empty() ? default_c_grid() : cfg.c_grid;
}

inline std::vector<int> effective_degree_grid(const ExperimentConfig& cfg) {
  return cfg.degree_grid.empty() ? default_degree_grid() : cfg.degree_grid;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace orcdetail

/// Centralized baseline: pools the plaintext, computes the exact Gram
/// matrix, and runs the same cross-validation grid as the function party.
inline CvReport run_naive_pipeline(const Dataset& data, const ExperimentConfig& cfg,
                                   double* training_seconds = nullptr) {
  const Matrix gram = data.features.times_transposed(data.features);
  const auto start = orcdetail::Clock::now();
  CvReport report = cross_validate_grid(gram, data.labels, orcdetail::effective_c_grid(cfg),
                                        orcdetail::effective_degree_grid(cfg),
                                        orcdetail::cv_options(cfg));
  if (training_seconds != nullptr) *training_seconds = orcdetail::seconds_since(start);
  return report;
}

// ---------------------------------------------------------------------------
// Party process plumbing: the CLI runs these configs in separate OS
// processes; the orchestrator writes them and collects the output files.
// ---------------------------------------------------------------------------

struct InputPartyProcessConfig {
  std::string registry_path;
  std::string party_id;
  std::uint64_t secret_seed = 0;
  std::uint64_t private_seed = 0;
  std::uint64_t mask_seed = 0;  // leader only: distributed to all parties
  std::size_t features = 1;
  std::size_t k = 2;
  std::uint16_t function_port = 0;  // overrides the registry entry
  std::size_t chunk_rows = 256;
  double timeout_s = 30.0;
  std::string timing_file;  // written on success: {"masking_s": x}
  // Synthetic source: the full dataset is re-derived from (n_total, seed)
  // and this party contributes rows [row_begin, row_begin + row_count).
  std::size_t data_n_total = 0;
  std::size_t data_classes = 2;
  std::uint64_t data_seed = 0;
  double data_separation = 2.0;
  std::size_t row_begin = 0;
  std::size_t row_count = 0;
};

struct FunctionPartyProcessConfig {
  std::string registry_path;
  double timeout_s = 30.0;
  bool train = true;
  std::vector<double> c_grid;
  std::vector<int> degree_grid;
  std::size_t folds = 5;
  std::uint64_t shuffle_seed = 1;
  double poly_offset = 1.0;
  std::string port_file;    // bound port, written once listening
  std::string result_file;  // JSON: report + stage timings
};

inline void to_json(nlohmann::json& j, const InputPartyProcessConfig& c) {
  j = nlohmann::json{{"registry_path", c.registry_path},
                     {"party_id", c.party_id},
                     {"secret_seed", c.secret_seed},
                     {"private_seed", c.private_seed},
                     {"mask_seed", c.mask_seed},
                     {"features", c.features},
                     {"k", c.k},
                     {"function_port", c.function_port},
                     {"chunk_rows", c.chunk_rows},
                     {"timeout_s", c.timeout_s},
                     {"timing_file", c.timing_file},
                     {"data_n_total", c.data_n_total},
                     {"data_classes", c.data_classes},
                     {"data_seed", c.data_seed},
                     {"data_separation", c.data_separation},
                     {"row_begin", c.row_begin},
                     {"row_count", c.row_count}};
}

inline void from_json(const nlohmann::json& j, InputPartyProcessConfig& c) {
  j.at("registry_path").get_to(c.registry_path);
  j.at("party_id").get_to(c.party_id);
  j.at("secret_seed").get_to(c.secret_seed);
  j.at("private_seed").get_to(c.private_seed);
  j.at("mask_seed").get_to(c.mask_seed);
  j.at("features").get_to(c.features);
  j.at("k").get_to(c.k);
  j.at("function_port").get_to(c.function_port);
  j.at("chunk_rows").get_to(c.chunk_rows);
  j.at("timeout_s").get_to(c.timeout_s);
  j.at("timing_file").get_to(c.timing_file);
  j.at("data_n_total").get_to(c.data_n_total);
  j.at("data_classes").get_to(c.data_classes);
  j.at("data_seed").get_to(c.data_seed);
  j.at("data_separation").get_to(c.data_separation);
  j.at("row_begin").get_to(c.row_begin);
  j.at("row_count").get_to(c.row_count);
}

inline void to_json(nlohmann::json& j, const FunctionPartyProcessConfig& c) {
  j = nlohmann::json{{"registry_path", c.registry_path}, {"timeout_s", c.timeout_s},
                     {"train", c.train},                 {"c_grid", c.c_grid},
                     {"degree_grid", c.degree_grid},     {"folds", c.folds},
                     {"shuffle_seed", c.shuffle_seed},   {"poly_offset", c.poly_offset},
                     {"port_file", c.port_file},         {"result_file", c.result_file}};
}

inline void from_json(const nlohmann::json& j, FunctionPartyProcessConfig& c) {
  j.at("registry_path").get_to(c.registry_path);
  j.at("timeout_s").get_to(c.timeout_s);
  j.at("train").get_to(c.train);
  j.at("c_grid").get_to(c.c_grid);
  j.at("degree_grid").get_to(c.degree_grid);
  j.at("folds").get_to(c.folds);
  j.at("shuffle_seed").get_to(c.shuffle_seed);
  j.at("poly_offset").get_to(c.poly_offset);
  j.at("port_file").get_to(c.port_file);
  j.at("result_file").get_to(c.result_file);
}

template <typename T>
inline T load_json_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  try {
    nlohmann::json j;
    in >> j;
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed config file " + path + ": " + e.what());
  }
}

template <typename T>
inline void save_json_file(const T& value, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  out << nlohmann::json(value).dump(2) << '\n';
}

/// Entry point of an input-party OS process (wired to a CLI subcommand).
/// Regenerates its data slice, joins the session, and reports masking time.
inline void input_party_process(const InputPartyProcessConfig& cfg) {
  SodiumCrypto crypto;
  PartyRegistry registry = load_registry(cfg.registry_path);
  if (cfg.function_port != 0) registry.function_port = cfg.function_port;

  const Dataset full = gen_synthetic(cfg.data_n_total, cfg.features, cfg.data_classes,
                                     cfg.data_seed, cfg.data_separation);

  InputPartyConfig party;
  party.registry = registry;
  party.keys = derive_party_keys(crypto, cfg.party_id, cfg.secret_seed);
  party.crypto = &crypto;
  party.private_seed = cfg.private_seed;
  party.timeout_s = cfg.timeout_s;
  party.chunk_rows = cfg.chunk_rows;
  party.rounds = 1;
  party.material = SeedMaterial{cfg.mask_seed, MaskDims(cfg.features, cfg.k)};

  double masking_seconds = 0.0;
  party.data_for_round = [&](std::size_t) {
    RoundData data;
    data.features = full.features.block(cfg.row_begin, 0, cfg.row_count, cfg.features);
    data.labels.assign(full.labels.begin() + cfg.row_begin,
                       full.labels.begin() + cfg.row_begin + cfg.row_count);
    return data;
  };
  // Masking time is measured around the protocol's mask step by re-masking
  // the same slice with the same context; the multiplication dominates.
  const InputPartyResult result = run_input_party(party);

  const MaskContext ctx =
      build_mask_context(result.material.seed, result.material.dims, cfg.party_id, cfg.private_seed);
  const Matrix slice = full.features.block(cfg.row_begin, 0, cfg.row_count, cfg.features);
  const auto start = orcdetail::Clock::now();
  const MaskedMatrix timed = mask(slice, ctx);
  masking_seconds = orcdetail::seconds_since(start);
  (void)timed;

  if (!cfg.timing_file.empty()) {
    save_json_file(nlohmann::json{{"masking_s", masking_seconds}}, cfg.timing_file);
  }
}

struct FunctionProcessOutput {
  CvReport report;
  double gram_s = 0.0;
  double training_s = 0.0;
  std::size_t total_samples = 0;
};

inline void to_json(nlohmann::json& j, const FunctionProcessOutput& o) {
  j = nlohmann::json{{"report", o.report},
                     {"gram_s", o.gram_s},
                     {"training_s", o.training_s},
                     {"total_samples", o.total_samples}};
}

inline void from_json(const nlohmann::json& j, FunctionProcessOutput& o) {
  j.at("report").get_to(o.report);
  j.at("gram_s").get_to(o.gram_s);
  j.at("training_s").get_to(o.training_s);
  j.at("total_samples").get_to(o.total_samples);
}

/// Entry point of the function-party OS process. Binds an ephemeral port,
/// publishes it through the port file, serves the session, and writes the
/// cross-validation report plus stage timings.
inline void function_party_process(const FunctionPartyProcessConfig& cfg) {
  const PartyRegistry registry = load_registry(cfg.registry_path);
  TcpListener listener("127.0.0.1", 0);
  save_json_file(nlohmann::json{{"port", listener.port()}}, cfg.port_file);

  FunctionPartyConfig fn;
  fn.registry = registry;
  fn.listener = &listener;
  fn.timeout_s = cfg.timeout_s;
  fn.rounds = 1;
  fn.train = false;  // timed separately below
  fn.cv.folds = cfg.folds;
  fn.cv.shuffle_seed = cfg.shuffle_seed;
  fn.cv.poly_offset = cfg.poly_offset;

  const auto gram_start = orcdetail::Clock::now();
  FunctionPartyResult session = run_function_party(fn);
  const double gram_s = orcdetail::seconds_since(gram_start);

  FunctionProcessOutput out;
  out.gram_s = gram_s;
  out.total_samples = session.store.gram().total_samples();
  if (cfg.train) {
    const std::vector<double> cs = cfg.c_grid.empty() ? default_c_grid() : cfg.c_grid;
    const std::vector<int> ps = cfg.degree_grid.empty() ? default_degree_grid() : cfg.degree_grid;
    const auto train_start = orcdetail::Clock::now();
    out.report = cross_validate_grid(session.store.gram().values(), session.labels, cs, ps, fn.cv);
    out.training_s = orcdetail::seconds_since(train_start);
  }
  save_json_file(out, cfg.result_file);
}

namespace orcdetail {

struct ChildProcess {
  pid_t pid = -1;
  std::string name;
  std::string log_path;
};

/// fork + exec of the CLI binary with stdout/stderr captured to a log file.
inline ChildProcess spawn_cli(const std::string& exe, const std::vector<std::string>& args,
                              const std::string& name, const std::string& log_path) {
  const pid_t pid = ::fork();
  if (pid < 0) throw IoError("fork failed");
  if (pid == 0) {
    FILE* log = std::freopen(log_path.c_str(), "w", stderr);
    (void)log;
    ::dup2(::fileno(stderr), ::fileno(stdout));
    std::vector<char*> argv;
    argv.push_back(const_cast<char*>(exe.c_str()));
    for (const std::string& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execv(exe.c_str(), argv.data());
    std::perror("execv");
    std::_Exit(127);
  }
  return ChildProcess{pid, name, log_path};
}

inline void wait_child(const ChildProcess& child) {
  int status = 0;
  if (::waitpid(child.pid, &status, 0) < 0) throw IoError("waitpid failed for " + child.name);
  const bool ok = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  if (!ok) {
    std::string log = read_text_file(child.log_path);
    if (log.size() > 2000) log = "..." + log.substr(log.size() - 2000);
    throw ProtocolError("party process '" + child.name + "' failed: " + log);
  }
}

inline std::string resolve_cli_path(const std::string& exe_path) {
  if (!exe_path.empty()) return exe_path;
  if (const char* env = std::getenv("FLAKE_CLI"); env != nullptr && *env != '\0') return env;
  return "/proc/self/exe";
}

inline std::uint16_t wait_for_port_file(const std::string& path, double timeout_s) {
  const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
  while (Clock::now() < deadline) {
    std::ifstream in(path);
    if (in) {
      try {
        nlohmann::json j;
        in >> j;
        return j.at("port").get<std::uint16_t>();
      } catch (const nlohmann::json::exception&) {
        // Partially written; retry.
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  throw IoError("function party never published its port (waited on " + path + ")");
}

inline std::string make_temp_dir() {
  std::string tmpl = std::filesystem::temp_directory_path() / "flake_runXXXXXX";
  if (::mkdtemp(tmpl.data()) == nullptr) throw IoError("mkdtemp failed");
  return tmpl;
}

}  // namespace orcdetail

struct ExperimentResult {
  std::optional<CvReport> federated;
  std::optional<CvReport> naive;
  std::optional<double> auc_difference;
  TimingReport timing;
};

/// Federated leg of an experiment: one OS process per party, wire protocol
/// over loopback TCP. Returns the function party's report and stage times.
inline FunctionProcessOutput run_federated_processes(const ExperimentConfig& cfg,
                                                     const std::string& exe_path,
                                                     double* masking_seconds = nullptr) {
  const std::string exe = orcdetail::resolve_cli_path(exe_path);
  const std::string dir = orcdetail::make_temp_dir();

  SodiumCrypto crypto;
  PartyRegistry registry;
  for (std::size_t i = 0; i < cfg.parties; ++i) {
    const PartyKeys keys =
        derive_party_keys(crypto, orcdetail::party_id(i), orcdetail::secret_seed(cfg, i));
    registry.input_parties.push_back(party_info_from_keys(keys, "127.0.0.1", 0));
  }
  registry.function_sign_public_key_b64 =
      to_base64(crypto.sign_keypair(orcdetail::secret_seed(cfg, 0xFFFF)).public_key);
  registry.function_address = "127.0.0.1";
  const std::string registry_path = dir + "/registry.json";
  save_registry(registry, registry_path);

  FunctionPartyProcessConfig fn;
  fn.registry_path = registry_path;
  fn.timeout_s = cfg.timeout_s;
  fn.train = true;
  fn.c_grid = cfg.c_grid;
  fn.degree_grid = cfg.degree_grid;
  fn.folds = cfg.folds;
  fn.shuffle_seed = cfg.seed;
  fn.poly_offset = orcdetail::cv_options(cfg).poly_offset;
  fn.port_file = dir + "/port.json";
  fn.result_file = dir + "/result.json";
  const std::string fn_config = dir + "/function.json";
  save_json_file(fn, fn_config);

  std::vector<orcdetail::ChildProcess> children;
  children.push_back(orcdetail::spawn_cli(exe, {"function-party", "--config", fn_config},
                                          "function", dir + "/function.log"));
  bool spawn_failed = false;
  std::string failure;
  try {
    const std::uint16_t port = orcdetail::wait_for_port_file(fn.port_file, cfg.timeout_s);
    const std::size_t total = cfg.parties * cfg.samples_per_party;
    for (std::size_t i = 0; i < cfg.parties; ++i) {
      InputPartyProcessConfig pc;
      pc.registry_path = registry_path;
      pc.party_id = orcdetail::party_id(i);
      pc.secret_seed = orcdetail::secret_seed(cfg, i);
      pc.private_seed = orcdetail::private_seed(cfg, i);
      pc.mask_seed = cfg.seed;
      pc.features = cfg.features;
      pc.k = cfg.k;
      pc.function_port = port;
      pc.chunk_rows = cfg.chunk_rows;
      pc.timeout_s = cfg.timeout_s;
      pc.timing_file = dir + "/timing_" + pc.party_id + ".json";
      pc.data_n_total = total;
      pc.data_classes = cfg.classes;
      pc.data_seed = cfg.seed;
      pc.data_separation = cfg.separation;
      const auto [begin, count] = orcdetail::party_slice(total, cfg.parties, i);
      pc.row_begin = begin;
      pc.row_count = count;
      const std::string pc_path = dir + "/input_" + pc.party_id + ".json";
      save_json_file(pc, pc_path);
      children.push_back(orcdetail::spawn_cli(exe, {"input-party", "--config", pc_path},
                                              pc.party_id, dir + "/" + pc.party_id + ".log"));
    }
  } catch (const std::exception& e) {
    spawn_failed = true;
    failure = e.what();
  }

  std::string first_child_failure;
  for (const auto& child : children) {
    try {
      orcdetail::wait_child(child);
    } catch (const std::exception& e) {
      if (first_child_failure.empty()) first_child_failure = e.what();
    }
  }
  if (spawn_failed) throw ProtocolError("federated run failed: " + failure);
  if (!first_child_failure.empty()) throw ProtocolError(first_child_failure);

  const FunctionProcessOutput out =
      load_json_config<FunctionProcessOutput>(fn.result_file);
  if (masking_seconds != nullptr) {
    const nlohmann::json t =
        nlohmann::json::parse(orcdetail::read_text_file(dir + "/timing_p0.json"));
    *masking_seconds = t.at("masking_s").get<double>();
  }
  std::filesystem::remove_all(dir);
  return out;
}

/// Runs the configured experiment. In `both` mode the federated pipeline
/// (isolated OS processes over TCP) and the naive centralized pipeline run
/// on identical data and their mean-AUC difference is reported.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& exe_path = "") {
  validate_config(cfg);
  ExperimentResult result;
  result.timing.label = "experiment";
  result.timing.repeats = 1;

  if (cfg.mode == "federated" || cfg.mode == "both") {
    double masking_s = 0.0;
    const FunctionProcessOutput out = run_federated_processes(cfg, exe_path, &masking_s);
    result.federated = out.report;
    result.timing.stages.push_back(StageSamples{"masking", {masking_s}});
    result.timing.stages.push_back(StageSamples{"gram", {out.gram_s}});
    result.timing.stages.push_back(StageSamples{"training", {out.training_s}});
  }
  if (cfg.mode == "naive" || cfg.mode == "both") {
    const Dataset data = gen_synthetic(cfg.parties * cfg.samples_per_party, cfg.features,
                                       cfg.classes, cfg.seed, cfg.separation);
    double training_s = 0.0;
    result.naive = run_naive_pipeline(data, cfg, &training_s);
    result.timing.stages.push_back(StageSamples{"naive_training", {training_s}});
  }
  if (result.federated && result.naive) {
    result.auc_difference = std::abs(result.federated->mean_auc - result.naive->mean_auc);
  }
  return result;
}

/// In-process scaling benchmark. For each total size: mask (one party,
/// context build excluded), compute the full Gram matrix, then run the CV
/// grid; each stage timed `repeats` times. All math is single-threaded.
/// When `reports_out` is given it receives one CvReport per size so callers
/// can verify instrumentation does not perturb results.
inline std::vector<TimingReport> run_scaling_benchmark(const std::vector<std::size_t>& sizes,
                                                       std::size_t repeats,
                                                       const ExperimentConfig& cfg,
                                                       std::vector<CvReport>* reports_out = nullptr) {
  if (sizes.empty()) throw ValidationError("run_scaling_benchmark: need at least one size");
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i] <= sizes[i - 1]) throw ValidationError("run_scaling_benchmark: sizes must ascend");
  }
  if (repeats < 1) throw ValidationError("run_scaling_benchmark: repeats must be >= 1");

  std::vector<TimingReport> series;
  for (const std::size_t n : sizes) {
    const Dataset data = gen_synthetic(n, cfg.features, cfg.classes, cfg.seed, cfg.separation);

    std::vector<MaskContext> contexts;
    std::vector<Matrix> slices;
    for (std::size_t p = 0; p < cfg.parties; ++p) {
      const auto [begin, count] = orcdetail::party_slice(n, cfg.parties, p);
      slices.push_back(data.features.block(begin, 0, count, cfg.features));
      contexts.push_back(build_mask_context(cfg.seed, MaskDims(cfg.features, cfg.k),
                                            orcdetail::party_id(p),
                                            orcdetail::private_seed(cfg, p)));
    }

    TimingReport report;
    report.label = "n=" + std::to_string(n);
    report.repeats = repeats;
    StageSamples masking{"masking", {}};
    StageSamples gram{"gram", {}};
    StageSamples training{"training", {}};
    CvReport cv_report;

    for (std::size_t rep = 0; rep < repeats; ++rep) {
      std::vector<MaskedMatrix> payloads;
      auto t0 = orcdetail::Clock::now();
      payloads.push_back(mask(slices[0], contexts[0]));
      masking.seconds.push_back(orcdetail::seconds_since(t0));
      for (std::size_t p = 1; p < cfg.parties; ++p) payloads.push_back(mask(slices[p], contexts[p]));

      t0 = orcdetail::Clock::now();
      const GramMatrix g = assemble_gram(payloads);
      gram.seconds.push_back(orcdetail::seconds_since(t0));

      t0 = orcdetail::Clock::now();
      cv_report = cross_validate_grid(g.values(), data.labels, orcdetail::effective_c_grid(cfg),
                                      orcdetail::effective_degree_grid(cfg),
                                      orcdetail::cv_options(cfg));
      training.seconds.push_back(orcdetail::seconds_since(t0));
    }

    report.stages = {masking, gram, training};
    series.push_back(std::move(report));
    if (reports_out != nullptr) reports_out->push_back(cv_report);
  }
  return series;
}

struct UpdateRunResult {
  TimingReport timing;                   // stages masking_round<r>, gram_round<r>
  std::vector<double> recompute_errors;  // per round vs from-scratch assembly
  GramStore store;                       // final state
};

/// Multi-round growth experiment, in process: every party adds `increment`
/// samples per round (round 0 contributes `start_n` each), masking touches
/// only the new rows, and the extended Gram matrix is checked against a
/// from-scratch recompute every round.
inline UpdateRunResult run_update_iterations(std::size_t start_n, std::size_t increment,
                                             std::size_t rounds, const ExperimentConfig& cfg) {
  if (rounds < 2) throw ValidationError("run_update_iterations: need at least 2 rounds");
  if (start_n < 1 || increment < 1) {
    throw ValidationError("run_update_iterations: start_n and increment must be >= 1");
  }

  const std::size_t per_party_total = start_n + increment * (rounds - 1);
  std::vector<Dataset> party_data;
  std::vector<MaskContext> contexts;
  for (std::size_t p = 0; p < cfg.parties; ++p) {
    party_data.push_back(gen_synthetic(per_party_total, cfg.features, cfg.classes,
                                       cfg.seed + 7919 * (p + 1), cfg.separation));
    contexts.push_back(build_mask_context(cfg.seed, MaskDims(cfg.features, cfg.k),
                                          orcdetail::party_id(p),
                                          orcdetail::private_seed(cfg, p)));
  }

  UpdateRunResult result;
  result.timing.label = "update";
  result.timing.repeats = 1;
  std::vector<MaskedMatrix> all_payloads;  // segment order, for the oracle

  for (std::size_t round = 0; round < rounds; ++round) {
    const std::size_t row_begin = round == 0 ? 0 : start_n + increment * (round - 1);
    const std::size_t row_count = round == 0 ? start_n : increment;

    double masking_s = 0.0;
    double gram_s = 0.0;
    for (std::size_t p = 0; p < cfg.parties; ++p) {
      if (round > 0) contexts[p] = advance_iteration(contexts[p]);
      const Matrix fresh =
          party_data[p].features.block(row_begin, 0, row_count, cfg.features);

      auto t0 = orcdetail::Clock::now();
      const MaskedMatrix masked = mask(fresh, contexts[p]);
      if (p == 0) masking_s = orcdetail::seconds_since(t0);

      t0 = orcdetail::Clock::now();
      if (round == 0) {
        result.store.add_party(masked);
      } else {
        result.store.extend_with_data(masked);
      }
      gram_s += orcdetail::seconds_since(t0);
      all_payloads.push_back(masked);
    }

    const GramMatrix oracle = assemble_gram(all_payloads);
    const double err = relative_frobenius_distance(result.store.gram().values(), oracle.values());
    result.recompute_errors.push_back(err);
    if (err > 1e-10) {
      throw NumericError("update round " + std::to_string(round) +
                         ": extended gram deviates from recompute by " + std::to_string(err));
    }

    const std::string suffix = "_round" + std::to_string(round);
    result.timing.stages.push_back(StageSamples{"masking" + suffix, {masking_s}});
    result.timing.stages.push_back(StageSamples{"gram" + suffix, {gram_s}});
  }
  return result;
}

}  // namespace flake
