// Copyright 2026 The FPEM Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fpem/run.h"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fpem/errors.h"
#include "fpem/kuhn.h"
#include "fpem/nn.h"
#include "fpem/rl.h"
#include "fpem/rollout.h"

namespace fpem::run {
namespace {

namespace fs = std::filesystem;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size()) return x;
  } catch (const std::logic_error&) {
  }
  throw ConfigError(key, "expected an integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) return x;
  } catch (const std::logic_error&) {
  }
  throw ConfigError(key, "expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<std::int64_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::int64_t> out;
  if (v.empty() || v == "none") return out;
  std::stringstream s(v);
  std::string item;
  while (std::getline(s, item, ',')) out.push_back(to_int(key, item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  if (xs.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::vector<int> to_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (std::int64_t x : to_list(key, v)) out.push_back(static_cast<int>(x));
  return out;
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

#define FPEM_INT_FIELD(name, ref) \
  fields.push_back({name, [&] { return std::to_string(ref); }, \
                    [&](const std::string& v) { ref = static_cast<std::remove_reference_t<decltype(ref)>>(to_int(name, v)); }})
#define FPEM_DOUBLE_FIELD(name, ref) \
  fields.push_back({name, [&] { return fmt(ref); }, [&](const std::string& v) { ref = to_double(name, v); }})
#define FPEM_BOOL_FIELD(name, ref) \
  fields.push_back({name, [&] { return std::string(ref ? "true" : "false"); }, \
                    [&](const std::string& v) { ref = to_bool(name, v); }})
#define FPEM_LIST_FIELD(name, ref) \
  fields.push_back({name, [&] { return join(ref); }, [&](const std::string& v) { ref = to_ints(name, v); }})

void optimizer_fields(std::vector<Field>& fields, const std::string& p, nn::OptimizerConfig& o) {
  fields.push_back({p + "optimizer", [&] { return std::string(o.kind == nn::OptimizerKind::kSgd ? "sgd" : "adam"); },
                    [&o, key = p + "optimizer"](const std::string& v) {
                      if (v == "sgd") o.kind = nn::OptimizerKind::kSgd;
                      else if (v == "adam") o.kind = nn::OptimizerKind::kAdam;
                      else throw ConfigError(key, "expected sgd or adam, got '" + v + "'");
                    }});
  const std::string lr = p + "learning_rate";
  fields.push_back({lr, [&o] { return fmt(o.learning_rate); },
                    [&o, lr](const std::string& v) { o.learning_rate = to_double(lr, v); }});
}

void solver_fields(std::vector<Field>& fields, const std::string& p, rl::SolverConfig& s) {
  // Keys are built at runtime, so these entries capture their own names.
  auto add_int = [&](const std::string& k, auto& ref) {
    const std::string key = p + k;
    fields.push_back({key, [&ref] { return std::to_string(ref); },
                      [&ref, key](const std::string& v) {
                        ref = static_cast<std::remove_reference_t<decltype(ref)>>(to_int(key, v));
                      }});
  };
  auto add_double = [&](const std::string& k, double& ref) {
    const std::string key = p + k;
    fields.push_back({key, [&ref] { return fmt(ref); }, [&ref, key](const std::string& v) { ref = to_double(key, v); }});
  };
  add_int("episodes", s.max_episodes);
  add_double("gamma", s.gamma);
  {
    const std::string key = p + "hidden";
    fields.push_back({key, [&s] { return join(s.hidden); }, [&s, key](const std::string& v) { s.hidden = to_ints(key, v); }});
  }
  add_int("batch_size", s.batch_size);
  add_int("replay_capacity", s.replay_capacity);
  add_int("target_sync_interval", s.target_sync_interval);
  add_int("learning_frequency", s.learning_frequency);
  add_int("updates_per_burst", s.updates_per_burst);
  optimizer_fields(fields, p, s.optimizer);
  add_double("epsilon_start", s.epsilon.start);
  add_double("epsilon_end", s.epsilon.end);
  add_double("epsilon_fraction", s.epsilon.fraction);
  {
    const std::string key = p + "stop_criterion";
    fields.push_back({key, [&s] { return std::string(s.use_stop_criterion ? "true" : "false"); },
                      [&s, key](const std::string& v) { s.use_stop_criterion = to_bool(key, v); }});
  }
  add_double("stop_delta", s.stop_delta);
  add_int("window", s.window);
}

std::vector<Field> fields_of(RunConfig& c) {
  std::vector<Field> fields;
  fields.push_back({"run.algo", [&] { return c.algo; }, [&](const std::string& v) { c.algo = v; }});
  fields.push_back({"run.game", [&] { return c.game; }, [&](const std::string& v) { c.game = v; }});
  FPEM_INT_FIELD("run.iterations", c.fpem.iterations);
  fields.push_back({"run.seeds", [&] { return join(c.seeds); },
                    [&](const std::string& v) {
                      c.seeds.clear();
                      for (std::int64_t s : to_list("run.seeds", v)) {
                        if (s < 0) throw ConfigError("run.seeds", "seeds must be nonnegative");
                        c.seeds.push_back(static_cast<std::uint64_t>(s));
                      }
                    }});
  FPEM_INT_FIELD("run.workers", c.workers);
  fields.push_back({"run.out", [&] { return c.out; }, [&](const std::string& v) { c.out = v; }});
  FPEM_INT_FIELD("run.eval_episodes", c.eval_episodes);
  solver_fields(fields, "max_solver.", c.fpem.max_solver);
  solver_fields(fields, "min_solver.", c.fpem.min_solver);
  FPEM_LIST_FIELD("selector.hidden", c.fpem.selector_hidden);
  FPEM_INT_FIELD("selector.epochs", c.fpem.selector_training.epochs);
  FPEM_INT_FIELD("selector.batch_size", c.fpem.selector_training.batch_size);
  optimizer_fields(fields, "selector.", c.fpem.selector_training.optimizer);
  FPEM_INT_FIELD("fpem.reservoir_capacity", c.fpem.reservoir_capacity);
  FPEM_DOUBLE_FIELD("fpem.holdout_fraction", c.fpem.holdout_fraction);
  fields.push_back({"fpem.reservoir_scope",
                    [&] { return std::string(c.fpem.reservoir_scope == core::ReservoirScope::kRun ? "run" : "iteration"); },
                    [&](const std::string& v) {
                      if (v == "run") c.fpem.reservoir_scope = core::ReservoirScope::kRun;
                      else if (v == "iteration") c.fpem.reservoir_scope = core::ReservoirScope::kIteration;
                      else throw ConfigError("fpem.reservoir_scope", "expected iteration or run, got '" + v + "'");
                    }});
  FPEM_INT_FIELD("fpem.pretrain_episodes", c.fpem.pretrain_episodes);
  FPEM_DOUBLE_FIELD("nfsp.eta", c.nfsp.eta);
  FPEM_DOUBLE_FIELD("nfsp.epsilon_start", c.nfsp.solver.epsilon.start);
  FPEM_DOUBLE_FIELD("nfsp.epsilon_end", c.nfsp.solver.epsilon.end);
  FPEM_DOUBLE_FIELD("nfsp.epsilon_fraction", c.nfsp.solver.epsilon.fraction);
  FPEM_INT_FIELD("nfsp.reservoir_capacity", c.nfsp.reservoir_capacity);
  FPEM_LIST_FIELD("nfsp.average_hidden", c.nfsp.average_hidden);
  FPEM_INT_FIELD("nfsp.average_batch_size", c.nfsp.average_batch_size);
  FPEM_INT_FIELD("nfsp.average_updates_per_burst", c.nfsp.average_updates_per_burst);
  optimizer_fields(fields, "nfsp.average_", c.nfsp.average_optimizer);
  FPEM_INT_FIELD("smv2.pool_capacity", c.pool_capacity);
  FPEM_BOOL_FIELD("psro.exact_entries", c.psro.exact_entries);
  FPEM_INT_FIELD("psro.sims_per_entry", c.psro.sims_per_entry);
  FPEM_INT_FIELD("psro.rm_iterations", c.psro.rm_iterations);
  FPEM_INT_FIELD("treasure.size", c.treasure.size);
  FPEM_DOUBLE_FIELD("treasure.obstacle_density", c.treasure.obstacle_density);
  FPEM_INT_FIELD("treasure.n_treasures", c.treasure.n_treasures);
  FPEM_INT_FIELD("treasure.max_ticks", c.treasure.max_ticks);
  FPEM_INT_FIELD("treasure.frame_stack", c.treasure.frame_stack);
  FPEM_INT_FIELD("adversary.budget", c.adversary.budget);
  FPEM_BOOL_FIELD("adversary.plateau_stop", c.adversary.plateau_stop);
  FPEM_INT_FIELD("adversary.plateau_window", c.adversary.plateau_window);
  FPEM_DOUBLE_FIELD("adversary.plateau_tolerance", c.adversary.plateau_tolerance);
  FPEM_INT_FIELD("adversary.plateau_patience", c.adversary.plateau_patience);
  return fields;
}

#undef FPEM_INT_FIELD
#undef FPEM_DOUBLE_FIELD
#undef FPEM_BOOL_FIELD
#undef FPEM_LIST_FIELD

const std::vector<std::string> kAlgos = {"fpem", "fpemv1", "nfsp", "smv1", "smv2", "oppo", "psro"};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("cannot write " + path);
}

std::string seed_dir(const std::string& out, std::uint64_t seed) {
  return (fs::path(out) / ("seed_" + std::to_string(seed))).string();
}

std::string run_id(const RunConfig& c, std::uint64_t seed) {
  return c.algo + "-" + c.game + "-s" + std::to_string(seed);
}

// Saves the components of a strategy as "<kind> <file> <weight>" lines.
void save_strategy(const MixedStrategy& s, const std::string& dir, Player seat) {
  const std::string prefix = seat == kMaxPlayer ? "max" : "min";
  const std::vector<double> w = s.probabilities();
  std::ostringstream lines;
  for (std::size_t j = 0; j < s.components.size(); ++j) {
    const BehaviorPolicy* p = s.components[j].get();
    const std::string file = prefix + "_" + std::to_string(j) + ".ckpt";
    if (const auto* q = dynamic_cast<const rl::QPolicy*>(p)) {
      nn::save_mlp(dir + "/" + file, q->net());
      lines << "q " << file << ' ' << fmt(w[j]) << '\n';
    } else if (const auto* a = dynamic_cast<const baselines::SoftmaxPolicy*>(p)) {
      nn::save_mlp(dir + "/" + file, a->net());
      lines << "softmax " << file << ' ' << fmt(w[j]) << '\n';
    } else if (dynamic_cast<const UniformRandomPolicy*>(p)) {
      lines << "uniform - " << fmt(w[j]) << '\n';
    } else {
      throw ContractError("save_strategy: unsupported policy '" + p->describe() + "'");
    }
  }
  write_file(dir + "/" + prefix + "_strategy.txt", lines.str());
}

void save_fpem_strategies(const core::FpemState& state, const std::string& dir) {
  write_file(dir + "/max_strategy.txt", "fpem . 1\n");
  std::ostringstream lines;
  const std::size_t n = state.pool_policies.size();
  for (std::size_t j = 0; j < n; ++j)
    lines << "q pool_" << j << ".ckpt " << fmt(1.0 / static_cast<double>(n)) << '\n';
  write_file(dir + "/min_strategy.txt", lines.str());
}

eval::MetricsRecord training_row(const RunConfig& c, const Environment& game, std::uint64_t seed, int t,
                                 std::int64_t episodes, const MixedStrategy& max_player,
                                 const MixedStrategy& min_player) {
  eval::MetricsRecord r;
  r.run_id = run_id(c, seed);
  r.algo = c.algo;
  r.game = c.game;
  r.iteration = t;
  r.episodes = episodes;
  r.seed = seed;
  if (c.game == "kuhn") r.nashconv = eval::nashconv_of(game, max_player, min_player, eval::EvalMode::kGreedy);
  return r;
}

// Writes one iteration's checkpoint and row, then marks it completed.
void finish_iteration(const RunConfig& c, std::uint64_t seed, int t, const eval::MetricsRecord& row) {
  const std::string dir = iteration_dir(c.out, seed, t);
  write_file(dir + "/row.csv", eval::format_record(row) + "\n");
  write_file(seed_dir(c.out, seed) + "/progress.txt", "completed=" + std::to_string(t) + "\n");
  spdlog::info("{} iteration {}/{}: episodes={}{}", run_id(c, seed), t, c.fpem.iterations, row.episodes,
               row.nashconv ? " nashconv=" + fmt(*row.nashconv) : std::string());
}

void train_seed(const RunConfig& c, const Environment& game, std::uint64_t seed) {
  const int done = completed_iterations(c.out, seed);
  if (done >= c.fpem.iterations) {
    spdlog::info("{}: already complete", run_id(c, seed));
    return;
  }
  const int na = game.spec().num_actions[kMaxPlayer];
  if (c.algo == "fpem" || c.algo == "fpemv1") {
    std::optional<core::FpemState> resume;
    if (done > 0) {
      spdlog::info("{}: resuming after iteration {}", run_id(c, seed), done);
      resume = core::load_state(game, c.fpem, iteration_dir(c.out, seed, done));
    }
    auto on_iteration = [&](const core::FpemState& state, const core::IterationReport& report) {
      const std::string dir = iteration_dir(c.out, seed, report.iteration);
      core::save_state(state, c.fpem, dir);
      save_fpem_strategies(state, dir);
      spdlog::debug("selector loss {} held-out {}", report.selector_loss, report.heldout_loss);
      finish_iteration(c, seed, report.iteration,
                       training_row(c, game, seed, report.iteration, report.episodes,
                                    eval::fpem_max_strategy(state, na), eval::fpem_min_strategy(state)));
    };
    if (c.algo == "fpem") {
      core::run_fpem(game, c.fpem, seed, on_iteration, std::move(resume));
    } else {
      core::run_fpem_v1(game, c.fpem, seed, on_iteration, std::move(resume));
    }
    return;
  }
  // Baselines have no mid-run state to restore; a partial seed is rerun
  // from the start, which reproduces the finished iterations exactly.
  if (done > 0) spdlog::info("{}: restarting incomplete seed", run_id(c, seed));
  auto on_progress = [&](const baselines::Progress& p) {
    const std::string dir = iteration_dir(c.out, seed, p.iteration);
    fs::create_directories(dir);
    save_strategy(p.max_player, dir, kMaxPlayer);
    save_strategy(p.min_player, dir, kMinPlayer);
    finish_iteration(c, seed, p.iteration,
                     training_row(c, game, seed, p.iteration, p.episodes, p.max_player, p.min_player));
  };
  if (c.algo == "nfsp") {
    baselines::nfsp_run(game, nfsp_config(c), seed, on_progress);
  } else if (c.algo == "smv1") {
    baselines::smv1_run(game, iterated_config(c), seed, on_progress);
  } else if (c.algo == "smv2") {
    baselines::smv2_run(game, iterated_config(c), seed, on_progress);
  } else if (c.algo == "oppo") {
    baselines::oppo_run(game, iterated_config(c), seed, on_progress);
  } else {
    baselines::psro_lite_run(game, psro_config(c), seed, on_progress);
  }
}

std::map<std::string, std::string> key_values(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::stringstream s(read_file(path));
  std::string line;
  while (std::getline(s, line)) {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

// Game name plus its settings; head-to-head needs both runs to agree.
std::string game_signature(const RunConfig& c) {
  std::string sig = c.game;
  if (c.game == "treasure") {
    std::stringstream lines(serialize(c));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("treasure.", 0) == 0) sig += ";" + line;
    }
  }
  return sig;
}

}  // namespace

void RunConfig::validate() const {
  if (std::find(kAlgos.begin(), kAlgos.end(), algo) == kAlgos.end())
    throw ConfigError("run.algo", "unknown algorithm '" + algo + "'");
  if (game != "kuhn" && game != "treasure") throw ConfigError("run.game", "unknown game '" + game + "'");
  if (algo == "psro" && game != "kuhn")
    throw ConfigError("run.algo", "psro supports kuhn only; treasure meta-games are not available");
  if (seeds.empty()) throw ConfigError("run.seeds", "at least one seed is required");
  if (workers < 0) throw ConfigError("run.workers", "must be nonnegative");
  if (out.empty()) throw ConfigError("run.out", "must not be empty");
  if (eval_episodes < 1) throw ConfigError("run.eval_episodes", "must be positive");
  if (fpem.iterations < 1) throw ConfigError("run.iterations", "must be positive");
  if (fpem.max_solver.max_episodes < 1) throw ConfigError("max_solver.episodes", "budgets must be positive");
  if (fpem.min_solver.max_episodes < 1) throw ConfigError("min_solver.episodes", "budgets must be positive");
  try {
    fpem.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("fpem." + e.field(), e.what());
  }
  if (game == "treasure") treasure.validate();
  nfsp_config(*this).validate();
  if (pool_capacity < 1) throw ConfigError("smv2.pool_capacity", "must be positive");
  if (algo == "psro") psro_config(*this).validate();
  adversary_config(*this).validate();
}

RunConfig default_config(const std::string& game) {
  RunConfig c;
  c.game = game;
  if (game == "treasure") {
    // Long episodes need a higher replay ratio than Kuhn's defaults.
    c.fpem.iterations = 5;
    for (rl::SolverConfig* s : {&c.fpem.max_solver, &c.fpem.min_solver}) {
      s->max_episodes = 10000;
      s->gamma = 0.99;
      s->hidden = {64};
      s->batch_size = 32;
      s->learning_frequency = 4;
      s->updates_per_burst = 16;
      s->replay_capacity = 50000;
      s->use_stop_criterion = true;
      s->window = 6000;
    }
    c.eval_episodes = 2000;
    c.adversary.eval_episodes = 2000;
  }
  return c;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (Field& f : fields_of(config)) {
    if (f.key == key) {
      f.set(value);
      return;
    }
  }
  throw ConfigError(key, "unknown configuration key");
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::stringstream s(text);
  std::string line;
  int number = 0;
  auto trim = [](std::string x) {
    const auto b = x.find_first_not_of(" \t\r");
    const auto e = x.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : x.substr(b, e - b + 1);
  };
  while (std::getline(s, line)) {
    ++number;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number), "expected key=value, got '" + line + "'");
    apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string serialize(const RunConfig& config) {
  RunConfig copy = config;
  std::string out;
  for (const Field& f : fields_of(copy)) out += f.key + "=" + f.get() + "\n";
  return out;
}

std::unique_ptr<Environment> make_game(const RunConfig& config) {
  if (config.game == "kuhn") return std::make_unique<kuhn::KuhnGame>();
  if (config.game == "treasure") return std::make_unique<treasure::TreasureGame>(config.treasure);
  throw ConfigError("run.game", "unknown game '" + config.game + "'");
}

baselines::NfspConfig nfsp_config(const RunConfig& config) {
  baselines::NfspConfig n = config.nfsp;
  const rl::EpsilonSchedule eps = n.solver.epsilon;
  n.solver = config.fpem.max_solver;
  n.solver.epsilon = eps;
  n.solver.use_stop_criterion = false;
  // One evaluation point per iteration, spending what an FPEM iteration
  // spends on its two best responses.
  n.eval_interval = config.fpem.max_solver.max_episodes + config.fpem.min_solver.max_episodes;
  n.total_episodes = n.eval_interval * config.fpem.iterations;
  return n;
}

baselines::IteratedConfig iterated_config(const RunConfig& config) {
  baselines::IteratedConfig c;
  c.iterations = config.fpem.iterations;
  c.max_solver = config.fpem.max_solver;
  c.min_solver = config.fpem.min_solver;
  c.pool_capacity = config.pool_capacity;
  return c;
}

baselines::PsroConfig psro_config(const RunConfig& config) {
  baselines::PsroConfig p = config.psro;
  p.iterations = config.fpem.iterations;
  p.solver = config.fpem.max_solver;
  return p;
}

eval::AdversaryConfig adversary_config(const RunConfig& config) {
  eval::AdversaryConfig a = config.adversary;
  a.solver = config.fpem.min_solver;
  a.eval_episodes = config.eval_episodes;
  return a;
}

std::string iteration_dir(const std::string& out, std::uint64_t seed, int iteration) {
  return (fs::path(seed_dir(out, seed)) / ("iter_" + std::to_string(iteration))).string();
}

int completed_iterations(const std::string& out, std::uint64_t seed) {
  const std::string path = seed_dir(out, seed) + "/progress.txt";
  if (!fs::exists(path)) return 0;
  const auto kv = key_values(path);
  const auto it = kv.find("completed");
  if (it == kv.end()) throw FormatError(path + ": missing 'completed'");
  return static_cast<int>(to_int("completed", it->second));
}

void train(const RunConfig& config) {
  config.validate();
  fs::create_directories(config.out);
  const std::string manifest = (fs::path(config.out) / "manifest.txt").string();
  const std::string text = serialize(config);
  if (fs::exists(manifest)) {
    // Worker count does not change results, so resuming may use another.
    RunConfig previous = load_manifest(config.out);
    previous.workers = config.workers;
    if (serialize(previous) != text)
      throw ConfigError("run.out", config.out + " holds a run with a different configuration");
  }
  write_file(manifest, text);
  if (config.workers > 0) set_worker_count(config.workers);
  const auto game = make_game(config);
  for (std::uint64_t seed : config.seeds) train_seed(config, *game, seed);

  std::vector<eval::MetricsRecord> rows;
  for (std::uint64_t seed : config.seeds) {
    for (int t = 1; t <= config.fpem.iterations; ++t) {
      std::stringstream s(read_file(iteration_dir(config.out, seed, t) + "/row.csv"));
      std::string line;
      std::getline(s, line);
      rows.push_back(eval::parse_record(line));
    }
  }
  const std::string metrics = (fs::path(config.out) / "metrics.csv").string();
  fs::remove(metrics);
  eval::export_metrics(rows, metrics);
}

RunConfig load_manifest(const std::string& run_dir) {
  const std::string path = (fs::path(run_dir) / "manifest.txt").string();
  if (!fs::exists(path)) throw FormatError("no run at " + run_dir + ": expected " + path);
  RunConfig c;
  apply_config_text(c, read_file(path));
  return c;
}

MixedStrategy load_strategy(const RunConfig& config, const Environment& game, const std::string& iter_dir,
                            Player seat) {
  const std::string list = iter_dir + "/" + (seat == kMaxPlayer ? "max" : "min") + "_strategy.txt";
  if (!fs::exists(list)) throw FormatError("missing checkpoint files: " + list);
  const int na = game.spec().num_actions[seat];
  std::stringstream s(read_file(list));
  std::string kind, file;
  double weight = 0.0;
  std::vector<std::string> missing;
  MixedStrategy out;
  while (s >> kind >> file >> weight) {
    const std::string path = iter_dir + "/" + file;
    if (kind == "uniform") {
      out.components.push_back(std::make_shared<const UniformRandomPolicy>(na));
    } else if (kind == "fpem") {
      if (!fs::exists(iter_dir + "/state.txt")) {
        missing.push_back(iter_dir + "/state.txt");
        continue;
      }
      out.components.push_back(core::load_state(game, config.fpem, iter_dir).policy(na));
    } else if (kind == "q" || kind == "softmax") {
      if (!fs::exists(path)) {
        missing.push_back(path);
        continue;
      }
      auto net = std::make_shared<const nn::Mlp>(nn::load_mlp(path));
      if (kind == "q") {
        out.components.push_back(std::make_shared<const rl::QPolicy>(net, na, 0.0));
      } else {
        out.components.push_back(std::make_shared<const baselines::SoftmaxPolicy>(net, na));
      }
    } else {
      throw FormatError(list + ": unknown policy kind '" + kind + "'");
    }
    out.weights.push_back(weight);
  }
  if (!missing.empty()) {
    std::string msg = "missing checkpoint files:";
    for (const std::string& m : missing) msg += " " + m;
    throw FormatError(msg);
  }
  if (out.components.empty()) throw FormatError(list + ": no policies listed");
  return out;
}

EvalKind parse_eval_kind(const std::string& name) {
  if (name == "nashconv") return EvalKind::kNashConv;
  if (name == "exploit") return EvalKind::kExploit;
  if (name == "h2h") return EvalKind::kHeadToHead;
  throw ConfigError("eval.mode", "expected nashconv, exploit or h2h, got '" + name + "'");
}

std::vector<eval::MetricsRecord> evaluate(const std::string& run_dir, EvalKind kind, const std::string& against,
                                          std::int64_t eval_episodes) {
  RunConfig c = load_manifest(run_dir);
  if (eval_episodes > 0) c.eval_episodes = eval_episodes;
  const auto game = make_game(c);
  std::vector<eval::MetricsRecord> rows;
  auto episodes_of = [&](std::uint64_t seed, int t) {
    std::stringstream s(read_file(iteration_dir(run_dir, seed, t) + "/row.csv"));
    std::string line;
    std::getline(s, line);
    return eval::parse_record(line).episodes;
  };
  auto make_row = [&](std::uint64_t seed, int t, const std::string& mode) {
    eval::MetricsRecord r;
    r.run_id = run_id(c, seed) + "-" + mode;
    r.algo = c.algo;
    r.game = c.game;
    r.iteration = t;
    r.episodes = episodes_of(seed, t);
    r.seed = seed;
    return r;
  };
  if (kind == EvalKind::kHeadToHead) {
    if (against.empty()) throw ConfigError("against", "h2h needs a second run directory");
    const RunConfig other = load_manifest(against);
    if (game_signature(c) != game_signature(other))
      throw ConfigError("against", "runs are on different games (" + c.game + " vs " + other.game + ")");
    for (std::uint64_t seed : c.seeds) {
      if (std::find(other.seeds.begin(), other.seeds.end(), seed) == other.seeds.end()) continue;
      const int ta = completed_iterations(run_dir, seed);
      const int tb = completed_iterations(against, seed);
      if (ta == 0 || tb == 0) continue;
      const MixedStrategy a = eval::with_mode(load_strategy(c, *game, iteration_dir(run_dir, seed, ta), kMaxPlayer),
                                              eval::EvalMode::kGreedy);
      const MixedStrategy b = eval::with_mode(
          load_strategy(other, *game, iteration_dir(against, seed, tb), kMaxPlayer), eval::EvalMode::kGreedy);
      const eval::MatchResult m = eval::head_to_head(*game, a, b, c.eval_episodes, seed);
      eval::MetricsRecord r = make_row(seed, ta, "h2h");
      r.algo = c.algo + "_vs_" + other.algo;
      r.win_rate = m.win_rate;
      r.stderr_value = m.stderr_return;
      r.avg_loss = -m.mean_return;
      rows.push_back(r);
      spdlog::info("{} vs {} seed {}: win rate {}", c.algo, other.algo, seed, m.win_rate);
    }
  } else {
    if (kind == EvalKind::kNashConv && c.game != "kuhn")
      throw ConfigError("eval.mode", "nashconv needs Kuhn poker; use exploit on " + c.game);
    for (std::uint64_t seed : c.seeds) {
      const int done = completed_iterations(run_dir, seed);
      for (int t = 1; t <= done; ++t) {
        const std::string dir = iteration_dir(run_dir, seed, t);
        const MixedStrategy max_player = load_strategy(c, *game, dir, kMaxPlayer);
        if (kind == EvalKind::kNashConv) {
          eval::MetricsRecord r = make_row(seed, t, "nashconv");
          r.nashconv = eval::nashconv_of(*game, max_player, load_strategy(c, *game, dir, kMinPlayer),
                                         eval::EvalMode::kGreedy);
          rows.push_back(r);
        } else {
          const eval::AdversaryResult a =
              eval::retrain_adversary(*game, eval::with_mode(max_player, eval::EvalMode::kGreedy), kMaxPlayer,
                                      adversary_config(c), RngStream::derive(seed, {7, static_cast<std::uint64_t>(t)}).next_u64());
          eval::MetricsRecord r = make_row(seed, t, "exploit");
          r.avg_loss = a.avg_loss;
          r.stderr_value = a.stderr_loss;
          rows.push_back(r);
          spdlog::info("{} iteration {}: avg loss {} (+- {}) after {} adversary episodes", run_id(c, seed), t,
                       a.avg_loss, a.stderr_loss, a.episodes_trained);
        }
      }
    }
  }
  eval::export_metrics(rows, (fs::path(run_dir) / "metrics.csv").string());
  return rows;
}

std::string inspect(const std::string& path) {
  std::ostringstream s;
  if (fs::is_regular_file(path)) {
    const nn::Mlp net = nn::load_mlp(path);
    s << "network " << path << "\n";
    s << "layers=" << net.num_layers() << "\n";
    s << "sizes=" << join(net.sizes()) << "\n";
    s << "parameters=" << net.parameter_count() << "\n";
    return s.str();
  }
  if (fs::exists(fs::path(path) / "state.txt")) {
    const auto kv = key_values((fs::path(path) / "state.txt").string());
    auto get = [&](const std::string& k) {
      const auto it = kv.find(k);
      if (it == kv.end()) throw FormatError(path + "/state.txt: missing '" + k + "'");
      return it->second;
    };
    if (get("format") != "fpem-state-1") throw FormatError(path + "/state.txt: unknown format");
    s << "fpem iteration " << path << "\n";
    s << "iteration=" << get("iteration") << "\n";
    s << "episodes=" << get("episodes") << "\n";
    s << "base_policies=" << get("base_policies") << "\n";
    s << "pool=" << get("pool") << "\n";
    s << "selector_components=" << get("selector_components") << "\n";
    const std::string sel = (fs::path(path) / "selector.ckpt").string();
    if (fs::exists(sel)) s << "selector_sizes=" << join(nn::load_mlp(sel).sizes()) << "\n";
    const std::string base = (fs::path(path) / "base_0.ckpt").string();
    if (fs::exists(base)) s << "base_sizes=" << join(nn::load_mlp(base).sizes()) << "\n";
    return s.str();
  }
  if (fs::exists(fs::path(path) / "manifest.txt")) {
    const RunConfig c = load_manifest(path);
    s << "run " << path << "\n";
    s << "algo=" << c.algo << "\n" << "game=" << c.game << "\n";
    s << "iterations=" << c.fpem.iterations << "\n";
    for (std::uint64_t seed : c.seeds)
      s << "seed_" << seed << ".completed=" << completed_iterations(path, seed) << "\n";
    return s.str();
  }
  if (fs::exists(fs::path(path) / "max_strategy.txt")) {
    s << "baseline iteration " << path << "\n";
    for (const char* side : {"max", "min"}) {
      std::stringstream lines(read_file((fs::path(path) / (std::string(side) + "_strategy.txt")).string()));
      std::string line;
      int n = 0;
      while (std::getline(lines, line)) n += !line.empty();
      s << side << "_policies=" << n << "\n";
    }
    return s.str();
  }
  throw FormatError("nothing to inspect at " + path + ": expected a checkpoint file, iteration or run directory");
}

}  // namespace fpem::run
