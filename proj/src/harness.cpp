#include "hetsched/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "hetsched/errors.hpp"

namespace hetsched::harness {

namespace fs = std::filesystem;

namespace {

const char* const kSchedulers[] = {"heft", "neural", "random", "fifo"};

double number_or_inf(const nlohmann::json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity"))
    return std::numeric_limits<double>::infinity();
  throw ConfigError("'" + key + "' must be a number");
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("'" + key + "' has the wrong type");
  }
}

std::uint64_t get_seed(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    throw ConfigError("'" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::size_t get_count(const nlohmann::json& v, const std::string& key) {
  return static_cast<std::size_t>(get_seed(v, key));
}

template <typename T, typename F>
std::vector<T> scalar_or_list(const nlohmann::json& v, const std::string& key, F convert) {
  std::vector<T> out;
  if (v.is_array())
    for (const auto& e : v) out.push_back(convert(e, key));
  else
    out.push_back(convert(v, key));
  return out;
}

void apply_net(neural::NetConfig& net, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("'net' must be an object");
  for (const auto& [key, v] : j.items()) {
    if (key == "width")
      net.width = get_count(v, "net.width");
    else if (key == "hidden")
      net.hidden = scalar_or_list<std::size_t>(v, "net.hidden", get_count);
    else if (key == "activation") {
      try {
        net.activation = nn::parse_activation(get_as<std::string>(v, "net.activation"));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "critic")
      net.critic = get_as<bool>(v, "net.critic");
    else
      throw ConfigError("unknown key 'net." + key + "'");
  }
}

void apply_train(ExperimentConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("'train' must be an object");
  auto& t = cfg.train;
  for (const auto& [key, v] : j.items()) {
    if (key == "curriculum") {
      if (!v.is_array()) throw ConfigError("'train.curriculum' must be a list");
      t.curriculum.clear();
      for (const auto& stage : v) {
        if (!stage.is_object() || !stage.contains("scale") || !stage.contains("episodes"))
          throw ConfigError("curriculum stages need 'scale' and 'episodes'");
        t.curriculum.push_back({number_or_inf(stage["scale"], "train.curriculum.scale"),
                                get_count(stage["episodes"], "train.curriculum.episodes")});
      }
    } else if (key == "rollouts")
      t.rollouts = get_count(v, "train.rollouts");
    else if (key == "sim_length")
      t.sim_length = number_or_inf(v, "train.sim_length");
    else if (key == "seed")
      t.seed = get_seed(v, "train.seed");
    else if (key == "sigma")
      t.noise.sigma_fraction = get_as<double>(v, "train.sigma");
    else if (key == "beta_start")
      t.beta_start = get_as<double>(v, "train.beta_start");
    else if (key == "beta_decay")
      t.beta_decay = get_as<double>(v, "train.beta_decay");
    else if (key == "reward_scale")
      t.reward_scale = get_as<double>(v, "train.reward_scale");
    else if (key == "learning_rate")
      t.adam.learning_rate = get_as<double>(v, "train.learning_rate");
    else if (key == "checkpoint_every")
      cfg.checkpoint_every = get_count(v, "train.checkpoint_every");
    else
      throw ConfigError("unknown key 'train." + key + "'");
  }
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig cfg) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "job")
      cfg.job_path = get_as<std::string>(v, key);
    else if (key == "resources")
      cfg.resources_path = get_as<std::string>(v, key);
    else if (key == "scheduler" || key == "schedulers")
      cfg.schedulers = scalar_or_list<std::string>(v, key, [](const auto& e, const auto& k) { return get_as<std::string>(e, k); });
    else if (key == "sim_length")
      cfg.sim_length = get_as<double>(v, key);
    else if (key == "warmup")
      cfg.warmup = get_as<double>(v, key);
    else if (key == "scale" || key == "scales")
      cfg.scales = scalar_or_list<double>(v, key, number_or_inf);
    else if (key == "capacity")
      cfg.capacity = get_count(v, key);
    else if (key == "seed" || key == "seeds")
      cfg.seeds = scalar_or_list<std::uint64_t>(v, key, get_seed);
    else if (key == "sigma" || key == "sigmas")
      cfg.sigmas = scalar_or_list<double>(v, key, [](const auto& e, const auto& k) { return get_as<double>(e, k); });
    else if (key == "pseudo_steady_state")
      cfg.pseudo_steady_state = get_as<bool>(v, key);
    else if (key == "checkpoint")
      cfg.checkpoint = get_as<std::string>(v, key);
    else if (key == "threads")
      cfg.threads = get_count(v, key);
    else if (key == "net")
      apply_net(cfg.net, v);
    else if (key == "train")
      apply_train(cfg, v);
    else
      throw ConfigError("unknown key '" + key + "'");
  }
  cfg.train.capacity = cfg.capacity;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

namespace {

Json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? Json("inf") : Json("-inf");
  return Json(v);
}

}  // namespace

Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["job"] = c.job_path;
  j["resources"] = c.resources_path;
  j["schedulers"] = c.schedulers;
  j["sim_length"] = c.sim_length;
  j["warmup"] = c.warmup;
  j["scales"] = Json::array();
  for (double s : c.scales) j["scales"].push_back(number_json(s));
  j["capacity"] = c.capacity;
  j["seeds"] = c.seeds;
  j["sigmas"] = c.sigmas;
  j["pseudo_steady_state"] = c.pseudo_steady_state;
  j["checkpoint"] = c.checkpoint;
  j["net"] = {{"width", c.net.width},
              {"hidden", c.net.hidden},
              {"activation", nn::to_string(c.net.activation)},
              {"critic", c.net.critic}};
  Json stages = Json::array();
  for (const auto& s : c.train.curriculum) stages.push_back({{"scale", number_json(s.scale)}, {"episodes", s.episodes}});
  j["train"] = {{"curriculum", stages},
                {"rollouts", c.train.rollouts},
                {"sim_length", c.train.sim_length},
                {"seed", c.train.seed},
                {"sigma", c.train.noise.sigma_fraction},
                {"beta_start", c.train.beta_start},
                {"beta_decay", c.train.beta_decay},
                {"reward_scale", c.train.reward_scale},
                {"learning_rate", c.train.adam.learning_rate},
                {"checkpoint_every", c.checkpoint_every}};
  return j;
}

bool is_scheduler_name(const std::string& name) {
  return std::find(std::begin(kSchedulers), std::end(kSchedulers), name) != std::end(kSchedulers);
}

void validate(const ExperimentConfig& c) {
  if (c.job_path.empty()) throw ConfigError("no job profile given");
  if (c.resources_path.empty()) throw ConfigError("no resource profile given");
  if (c.schedulers.empty()) throw ConfigError("no scheduler given");
  for (const auto& s : c.schedulers)
    if (!is_scheduler_name(s)) throw ConfigError("unknown scheduler '" + s + "' (heft|neural|random|fifo)");
  if (!(c.sim_length > 0)) throw ConfigError("sim_length must be positive");
  if (!(c.warmup >= 0) || !(c.warmup < c.sim_length)) throw ConfigError("warmup must satisfy 0 <= warmup < sim_length");
  if (c.capacity < 1) throw ConfigError("capacity must be at least 1");
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  if (c.scales.empty()) throw ConfigError("at least one scale is required");
  for (double s : c.scales)
    if (!(s > 0)) throw ConfigError("scale values must be positive");
  if (c.sigmas.empty()) throw ConfigError("at least one sigma is required");
  for (double s : c.sigmas)
    if (!(s >= 0) || !std::isfinite(s)) throw ConfigError("sigma values must be finite and >= 0");
  if (c.net.width == 0) throw ConfigError("net.width must be positive");
  for (auto h : c.net.hidden)
    if (h == 0) throw ConfigError("net.hidden sizes must be positive");
  const auto& t = c.train;
  if (t.curriculum.empty()) throw ConfigError("train.curriculum needs at least one stage");
  for (const auto& s : t.curriculum)
    if (!(s.scale > 0)) throw ConfigError("curriculum scales must be positive");
  if (t.rollouts < (c.net.critic ? 1u : 2u))
    throw ConfigError("train.rollouts must be at least 2 with the mean baseline (1 with a critic)");
  if (!(t.sim_length > 0)) throw ConfigError("train.sim_length must be positive");
  if (!(t.noise.sigma_fraction >= 0)) throw ConfigError("train.sigma must be >= 0");
  if (!(t.adam.learning_rate > 0)) throw ConfigError("train.learning_rate must be positive");
  if (c.checkpoint_every == 0) throw ConfigError("train.checkpoint_every must be positive");
}

Profiles load_profiles(const ExperimentConfig& config) {
  try {
    auto [job, res] = hetsched::load_profiles(config.job_path, config.resources_path);
    return {std::move(job), std::move(res)};
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

std::unique_ptr<neural::PolicyNetwork> make_network(const ExperimentConfig& config, const Profiles& profiles) {
  auto net = std::make_unique<neural::PolicyNetwork>(profiles.job, profiles.resources, config.capacity, config.net,
                                                     config.train.seed);
  if (!config.checkpoint.empty()) nn::import_params(net->params(), nn::load_tensors(config.checkpoint), "param/");
  return net;
}

std::unique_ptr<Scheduler> make_scheduler(const std::string& name, std::uint64_t seed,
                                          const neural::PolicyNetwork* network) {
  if (name == "heft") return std::make_unique<HeftScheduler>();
  if (name == "fifo") return std::make_unique<FifoScheduler>();
  if (name == "random") return std::make_unique<RandomScheduler>(seed);
  if (name == "neural") {
    if (!network) throw ConfigError("the neural scheduler needs a network");
    return std::make_unique<neural::NeuralScheduler>(*network, neural::Mode::greedy, seed);
  }
  throw ConfigError("unknown scheduler '" + name + "'");
}

SimConfig sim_config(const ExperimentConfig& config, double scale, double sigma, std::uint64_t seed) {
  SimConfig s;
  s.scale = scale;
  s.sim_length = config.sim_length;
  s.warmup = config.warmup;
  s.capacity = config.capacity;
  s.seed = seed;
  s.noise.sigma_fraction = sigma;
  s.pseudo_steady_state = config.pseudo_steady_state;
  return s;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<RunResult> run_grid(const ExperimentConfig& config, const Profiles& profiles,
                                const neural::PolicyNetwork* network) {
  std::vector<RunKey> keys;
  for (const auto& s : config.schedulers)
    for (double sigma : config.sigmas)
      for (double scale : config.scales)
        for (auto seed : config.seeds) keys.push_back({s, sigma, scale, seed});
  std::vector<RunResult> results(keys.size());
  parallel_for(keys.size(), config.threads, [&](std::size_t i) {
    const auto& k = keys[i];
    auto sched = make_scheduler(k.scheduler, k.seed, network);
    auto t0 = std::chrono::steady_clock::now();
    auto ep = run_episode(profiles.job, profiles.resources, sim_config(config, k.scale, k.sigma, k.seed), *sched);
    auto t1 = std::chrono::steady_clock::now();
    results[i] = {k, ep.metrics, std::chrono::duration<double>(t1 - t0).count()};
  });
  return results;
}

std::vector<RunResult> run_eval(const ExperimentConfig& config) {
  validate(config);
  auto profiles = load_profiles(config);
  std::unique_ptr<neural::PolicyNetwork> net;
  if (std::find(config.schedulers.begin(), config.schedulers.end(), "neural") != config.schedulers.end())
    net = make_network(config, profiles);
  return run_grid(config, profiles, net.get());
}

std::vector<RunResult> run_noise_sweep(ExperimentConfig config, const std::vector<double>& sigmas) {
  config.sigmas = sigmas;
  return run_eval(config);
}

std::vector<Aggregate> aggregate(const std::vector<RunResult>& results) {
  std::vector<Aggregate> out;
  auto same = [](const RunKey& a, const RunKey& b) {
    return a.scheduler == b.scheduler && a.sigma == b.sigma && a.scale == b.scale;
  };
  for (std::size_t i = 0; i < results.size();) {
    std::size_t j = i;
    while (j < results.size() && same(results[j].key, results[i].key)) ++j;
    Aggregate a;
    a.key = results[i].key;
    a.key.seed = 0;
    a.runs = j - i;
    std::vector<double> comp, lat;
    for (std::size_t k = i; k < j; ++k) {
      comp.push_back(static_cast<double>(results[k].metrics.completed));
      if (std::isfinite(results[k].metrics.latency)) lat.push_back(results[k].metrics.latency);
    }
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
      mean = sd = 0;
      if (v.empty()) {
        mean = std::numeric_limits<double>::infinity();
        return;
      }
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      if (v.size() > 1) {
        for (double x : v) sd += (x - mean) * (x - mean);
        sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
      }
    };
    stats(comp, a.completed_mean, a.completed_std);
    stats(lat, a.latency_mean, a.latency_std);
    a.latency_runs = lat.size();
    out.push_back(a);
    i = j;
  }
  return out;
}

std::string format_fixed6(double v) {
  if (!std::isfinite(v)) return format_number(v);
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
  return std::string(buf, ptr);
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_runs_csv(std::ostream& out, const std::vector<RunResult>& results, const Json& config) {
  out << "# config " << config.dump() << '\n';
  out << "scheduler,sigma,scale,seed,completed,latency,injected\n";
  for (const auto& r : results)
    out << r.key.scheduler << ',' << format_number(r.key.sigma) << ',' << format_number(r.key.scale) << ','
        << r.key.seed << ',' << r.metrics.completed << ',' << format_number(r.metrics.latency) << ','
        << r.metrics.injected << '\n';
}

void write_aggregate_csv(std::ostream& out, const std::vector<Aggregate>& rows, const Json& config) {
  out << "# config " << config.dump() << '\n';
  out << "scheduler,sigma,scale,runs,completed_mean,completed_std,latency_mean,latency_std,latency_runs\n";
  for (const auto& a : rows)
    out << a.key.scheduler << ',' << format_number(a.key.sigma) << ',' << format_number(a.key.scale) << ',' << a.runs
        << ',' << format_number(a.completed_mean) << ',' << format_number(a.completed_std) << ','
        << format_number(a.latency_mean) << ',' << format_number(a.latency_std) << ',' << a.latency_runs << '\n';
}

Json metrics_json(const Metrics& m) {
  Json j;
  j["completed"] = m.completed;
  j["latency"] = std::isfinite(m.latency) ? Json(m.latency) : Json(nullptr);
  j["injected"] = m.injected;
  j["sim_length"] = m.sim_length;
  j["warmup"] = m.warmup;
  j["scale"] = std::isfinite(m.scale) ? Json(m.scale) : Json(nullptr);
  j["seed"] = m.seed;
  return j;
}

void write_gantt_csv(std::ostream& out, const ScheduleRecord& record) {
  out << "job,task,pe,start,finish\n";
  for (const auto& e : record)
    out << e.job << ',' << e.task << ',' << e.pe << ',' << format_fixed6(e.start) << ',' << format_fixed6(e.finish)
        << '\n';
}

Json gantt_json(const ScheduleRecord& record, const Json& config) {
  std::map<PeId, std::vector<const ScheduleEntry*>> by_pe;
  for (const auto& e : record) by_pe[e.pe].push_back(&e);
  Json pes = Json::array();
  for (auto& [pe, entries] : by_pe) {
    std::stable_sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->start < b->start; });
    Json tasks = Json::array();
    for (const auto* e : entries)
      tasks.push_back({{"job", e->job}, {"task", e->task}, {"start", e->start}, {"finish", e->finish}});
    pes.push_back({{"pe", pe}, {"tasks", tasks}});
  }
  Json j;
  j["config"] = config;
  j["makespan"] = record.empty() ? 0.0 : makespan(record);
  j["pes"] = pes;
  return j;
}

std::string companion_json_path(const std::string& csv_path) {
  fs::path p(csv_path);
  if (p.extension() == ".csv") return p.replace_extension(".json").string();
  return csv_path + ".json";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path);
}

void export_gantt(const ScheduleRecord& record, const std::string& path, const Json& config) {
  std::ostringstream csv;
  write_gantt_csv(csv, record);
  write_text(path, csv.str());
  write_text(companion_json_path(path), gantt_json(record, config).dump(2) + "\n");
}

void write_event_log(std::ostream& out, const std::vector<SimEvent>& events) {
  for (const auto& e : events)
    out << format_fixed6(e.clock) << ' ' << e.kind << ' ' << e.job << ' ' << e.task << ' ' << e.pe << '\n';
}

// ---------------------------------------------------------------------------
// Training

std::string train_log_row(const neural::EpisodeLog& l) {
  std::ostringstream o;
  o << l.episode << ',' << format_number(l.scale) << ',' << format_number(l.beta) << ',' << format_number(l.mean_return)
    << ',' << format_number(l.entropy) << ',' << format_number(l.completed_jobs) << ',' << format_number(l.latency);
  return o.str();
}

namespace {

std::string checkpoint_stem(std::size_t episode) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%06zu", episode);
  return buf;
}

std::string sidecar_path(const std::string& checkpoint) {
  fs::path p(checkpoint);
  return p.replace_extension(".json").string();
}

void save_checkpoint(const std::string& path, const neural::PolicyNetwork& net, const nn::Adam& adam,
                     std::size_t next_episode, const ExperimentConfig& config) {
  nn::save_tensors(path, neural::checkpoint_tensors(net, adam));
  Json side;
  side["format"] = "hetsched-checkpoint";
  side["version"] = nn::kCheckpointVersion;
  side["episode"] = next_episode;
  std::size_t stage = 0, acc = 0;
  for (; stage < config.train.curriculum.size(); ++stage) {
    acc += config.train.curriculum[stage].episodes;
    if (next_episode < acc) break;
  }
  side["stage"] = stage;
  side["config"] = config_to_json(config);
  write_text(sidecar_path(path), side.dump(2) + "\n");
}

}  // namespace

TrainResult run_training(const ExperimentConfig& config, const std::string& out_dir,
                         const std::optional<std::string>& resume, std::ostream* progress) {
  validate(config);
  auto profiles = load_profiles(config);
  neural::PolicyNetwork net(profiles.job, profiles.resources, config.capacity, config.net, config.train.seed);
  nn::Adam adam(config.train.adam);
  TrainResult result;

  if (resume) {
    nlohmann::json side;
    {
      std::ifstream in(sidecar_path(*resume));
      if (!in) throw nn::CheckpointError("missing checkpoint sidecar " + sidecar_path(*resume));
      try {
        side = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw nn::CheckpointError(std::string("bad checkpoint sidecar: ") + e.what());
      }
    }
    if (side.value("version", -1) != nn::kCheckpointVersion)
      throw nn::CheckpointError("checkpoint sidecar version is not supported");
    neural::restore_checkpoint(net, adam, nn::load_tensors(*resume));
    result.first_episode = side.at("episode").get<std::size_t>();
  } else if (!config.checkpoint.empty()) {
    nn::import_params(net.params(), nn::load_tensors(config.checkpoint), "param/");
  }

  fs::create_directories(out_dir);
  const std::string log_path = join_path(out_dir, "train_log.csv");
  {
    // Keep rows from before the resume point so the log matches an uninterrupted run.
    std::vector<std::string> kept;
    if (resume) {
      std::ifstream in(log_path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("episode,", 0) == 0) continue;
        if (std::stoull(line.substr(0, line.find(','))) < result.first_episode) kept.push_back(line);
      }
    }
    std::ofstream out(log_path, std::ios::binary);
    out << "# config " << config_to_json(config).dump() << '\n' << kTrainLogHeader << '\n';
    for (const auto& l : kept) out << l << '\n';
  }
  if (!resume) save_checkpoint(join_path(out_dir, checkpoint_stem(0) + ".txt"), net, adam, 0, config);

  std::ofstream log(log_path, std::ios::binary | std::ios::app);
  result.logs = neural::train_curriculum(net, adam, profiles.job, profiles.resources, config.train,
                                         result.first_episode, [&](const neural::EpisodeLog& l) {
                                           log << train_log_row(l) << '\n';
                                           log.flush();
                                           if (progress) *progress << train_log_row(l) << '\n';
                                           if ((l.episode + 1) % config.checkpoint_every == 0)
                                             save_checkpoint(join_path(out_dir, checkpoint_stem(l.episode + 1) + ".txt"),
                                                             net, adam, l.episode + 1, config);
                                         });
  result.final_checkpoint = join_path(out_dir, "final.txt");
  save_checkpoint(result.final_checkpoint, net, adam, std::max(result.first_episode, neural::total_episodes(config.train)),
                  config);
  return result;
}

}  // namespace hetsched::harness
