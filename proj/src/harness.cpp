#include "bps/harness.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bps/exact_oracle.hpp"
#include "bps/parallel.hpp"
#include "bps/particle_smoother.hpp"

namespace bps {

using nlohmann::json;

std::string to_string(FunctionalKind kind) {
  switch (kind) {
    case FunctionalKind::CrossLag: return "cross_lag";
    case FunctionalKind::SuffStats: return "suffstats";
    case FunctionalKind::Score: return "score";
    case FunctionalKind::ComponentMean: return "component_mean";
  }
  return "?";
}

FunctionalKind parse_functional(const std::string& name) {
  for (auto k : {FunctionalKind::CrossLag, FunctionalKind::SuffStats, FunctionalKind::Score,
                 FunctionalKind::ComponentMean})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown functional '" + name + "'");
}

std::string to_string(Algorithm algorithm) { return algorithm == Algorithm::Gradient ? "gradient" : "em"; }

Algorithm parse_algorithm(const std::string& name) {
  if (name == "gradient") return Algorithm::Gradient;
  if (name == "em") return Algorithm::EM;
  throw ConfigError("unknown algorithm '" + name + "' (expected gradient or em)");
}

ExperimentConfig::ExperimentConfig() {
  theta_true.a = Eigen::Vector2d(0.5, 0.2);
  methods = {{SmootherKind::StandardFS, FilterFamily::PF},
             {SmootherKind::StandardBS, FilterFamily::PF},
             {SmootherKind::BlockedFS, FilterFamily::BPF},
             {SmootherKind::BlockedBS, FilterFamily::BPF}};
  algorithms = {Algorithm::Gradient, Algorithm::EM};
}

namespace {

json params_json(const ModelParams& p) {
  return json{{"a", std::vector<double>(p.a.data(), p.a.data() + p.a.size())},
              {"log_sigma_x", p.log_sigma_x},
              {"log_sigma_y", p.log_sigma_y}};
}

ModelParams params_from_json(const json& j, const std::string& key) {
  if (!j.is_object()) throw ConfigError("'" + key + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "a" && it.key() != "log_sigma_x" && it.key() != "log_sigma_y")
      throw ConfigError("unknown key '" + key + "." + it.key() + "'");
  ModelParams p;
  const auto a = j.at("a").get<std::vector<double>>();
  if (a.empty()) throw ConfigError("'" + key + ".a' must be non-empty");
  p.a = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  p.log_sigma_x = j.value("log_sigma_x", 0.0);
  p.log_sigma_y = j.value("log_sigma_y", 0.0);
  return p;
}

std::size_t positive(const json& j, const char* key) {
  const auto v = j.get<std::int64_t>();
  if (v < 1) throw ConfigError(std::string("'") + key + "' must be positive");
  return static_cast<std::size_t>(v);
}

std::size_t nonnegative(const json& j, const char* key) {
  const auto v = j.get<std::int64_t>();
  if (v < 0) throw ConfigError(std::string("'") + key + "' must be nonnegative");
  return static_cast<std::size_t>(v);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "seed", "V", "V_values", "T", "N", "M", "radius", "block_size", "enlargement", "proposal",
      "theta_true", "theta_init", "replicates", "iterations", "stop_threshold", "methods", "algorithms",
      "functional", "functional_ring", "component_vertex", "component_time", "normalize", "record_runtime"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");

  ExperimentConfig c;
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("V")) c.V = positive(j["V"], "V");
    if (j.contains("V_values")) {
      for (const auto& v : j["V_values"]) c.V_values.push_back(positive(v, "V_values"));
    }
    if (j.contains("T")) c.T = positive(j["T"], "T");
    if (j.contains("N")) c.N = positive(j["N"], "N");
    if (j.contains("M")) c.M = positive(j["M"], "M");
    if (j.contains("radius")) c.radius = nonnegative(j["radius"], "radius");
    if (j.contains("block_size")) c.block_size = positive(j["block_size"], "block_size");
    if (j.contains("enlargement")) c.enlargement = nonnegative(j["enlargement"], "enlargement");
    if (j.contains("proposal")) c.proposal = parse_proposal(j["proposal"].get<std::string>());
    if (j.contains("theta_true")) {
      c.theta_true = params_from_json(j["theta_true"], "theta_true");
    } else if (c.radius != 1) {
      throw ConfigError("'theta_true' is required when radius != 1");
    }
    if (j.contains("theta_init")) {
      const auto& ti = j["theta_init"];
      if (ti.is_string()) {
        if (ti.get<std::string>() != "random") throw ConfigError("'theta_init' must be \"random\" or an object");
      } else {
        c.theta_init = params_from_json(ti, "theta_init");
      }
    }
    if (j.contains("replicates")) c.replicates = positive(j["replicates"], "replicates");
    if (j.contains("iterations")) c.iterations = nonnegative(j["iterations"], "iterations");
    if (j.contains("stop_threshold") && !j["stop_threshold"].is_null())
      c.stop_threshold = j["stop_threshold"].get<double>();
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) {
        for (auto it = m.begin(); it != m.end(); ++it)
          if (it.key() != "smoother" && it.key() != "filter")
            throw ConfigError("unknown key 'methods[]." + it.key() + "'");
        c.methods.push_back({parse_smoother(m.at("smoother").get<std::string>()),
                             parse_filter_family(m.value("filter", std::string("pf")))});
      }
      if (c.methods.empty()) throw ConfigError("'methods' must be non-empty");
    }
    if (j.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& a : j["algorithms"]) c.algorithms.push_back(parse_algorithm(a.get<std::string>()));
      if (c.algorithms.empty()) throw ConfigError("'algorithms' must be non-empty");
    }
    if (j.contains("functional")) c.functional = parse_functional(j["functional"].get<std::string>());
    if (j.contains("functional_ring")) c.functional_ring = nonnegative(j["functional_ring"], "functional_ring");
    if (j.contains("component_vertex") && !j["component_vertex"].is_null())
      c.component_vertex = nonnegative(j["component_vertex"], "component_vertex");
    if (j.contains("component_time") && !j["component_time"].is_null())
      c.component_time = nonnegative(j["component_time"], "component_time");
    if (j.contains("normalize")) c.normalize = j["normalize"].get<bool>();
    if (j.contains("record_runtime")) c.record_runtime = j["record_runtime"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }

  if (static_cast<std::size_t>(c.theta_true.a.size()) != c.radius + 1)
    throw ConfigError("'theta_true.a' must have radius + 1 entries");
  if (c.theta_init && static_cast<std::size_t>(c.theta_init->a.size()) != c.radius + 1)
    throw ConfigError("'theta_init.a' must have radius + 1 entries");
  if (c.functional_ring > c.radius) throw ConfigError("'functional_ring' exceeds the radius");
  if (c.component_time && *c.component_time >= c.T) throw ConfigError("'component_time' must be < T");
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["V"] = V;
  j["V_values"] = V_values;
  j["T"] = T;
  j["N"] = N;
  j["M"] = M;
  j["radius"] = radius;
  j["block_size"] = block_size;
  j["enlargement"] = enlargement;
  j["proposal"] = to_string(proposal);
  j["theta_true"] = params_json(theta_true);
  j["theta_init"] = theta_init ? params_json(*theta_init) : json("random");
  j["replicates"] = replicates;
  j["iterations"] = iterations;
  j["stop_threshold"] = stop_threshold ? json(*stop_threshold) : json(nullptr);
  json ms = json::array();
  for (const auto& m : methods) ms.push_back({{"smoother", to_string(m.smoother)}, {"filter", to_string(m.filter)}});
  j["methods"] = ms;
  json as = json::array();
  for (auto a : algorithms) as.push_back(to_string(a));
  j["algorithms"] = as;
  j["functional"] = to_string(functional);
  j["functional_ring"] = functional_ring;
  j["component_vertex"] = component_vertex ? json(*component_vertex) : json(nullptr);
  j["component_time"] = component_time ? json(*component_time) : json(nullptr);
  j["normalize"] = normalize;
  j["record_runtime"] = record_runtime;
  return j;
}

std::string ExperimentConfig::hash() const {
  const std::string canon = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EstimatorConfig ExperimentConfig::estimator(const MethodSpec& method) const {
  EstimatorConfig e;
  e.smoother = method.smoother;
  e.filter = method.filter;
  e.proposal = proposal;
  e.N = N;
  e.M = M;
  e.block_size = block_size;
  e.enlargement = enlargement;
  return e;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return ExperimentConfig::from_json(j);
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::uint64_t replicate_seed(std::uint64_t seed, std::size_t V, std::size_t r) {
  return derive_seed(seed, StreamTag::Replicate, {V, r});
}

SimulatedData simulate_data(const LatticeModel& model, std::size_t T, std::uint64_t seed) {
  if (T == 0) throw ConfigError("T must be positive");
  const auto V = static_cast<Eigen::Index>(model.dim());
  Rng rng(seed, StreamTag::Simulate, {});
  SimulatedData d{ParticleMatrix(static_cast<Eigen::Index>(T), V), ParticleMatrix(static_cast<Eigen::Index>(T), V)};
  Eigen::VectorXd x = model.sample_initial(rng);
  for (std::size_t t = 0; t < T; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    if (t > 0) x = model.sample_transition(std::span<const double>(x.data(), x.size()), rng);
    d.x.row(ti) = x.transpose();
    d.y.row(ti) = model.sample_observation(std::span<const double>(x.data(), x.size()), rng).transpose();
  }
  return d;
}

std::string data_csv(const SimulatedData& data) {
  std::string out = "t,v,x,y\n";
  for (Eigen::Index t = 0; t < data.y.rows(); ++t)
    for (Eigen::Index v = 0; v < data.y.cols(); ++v) {
      out += std::to_string(t) + "," + std::to_string(v) + ",";
      if (data.x.size()) out += format_double(data.x(t, v));
      out += "," + format_double(data.y(t, v)) + "\n";
    }
  return out;
}

SimulatedData parse_data_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,v,x,y", 0) != 0)
    throw IoError("data file must start with the header t,v,x,y");
  struct Entry {
    std::size_t t, v;
    std::optional<double> x;
    double y;
  };
  std::vector<Entry> entries;
  std::size_t T = 0, V = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 4) throw IoError("data line " + std::to_string(lineno) + ": expected 4 fields");
    try {
      Entry e{std::stoul(f[0]), std::stoul(f[1]), std::nullopt, std::stod(f[3])};
      if (!f[2].empty()) e.x = std::stod(f[2]);
      T = std::max(T, e.t + 1);
      V = std::max(V, e.v + 1);
      entries.push_back(e);
    } catch (const std::exception&) {
      throw IoError("data line " + std::to_string(lineno) + ": unparsable number");
    }
  }
  if (entries.size() != T * V || T == 0) throw IoError("data file does not contain a complete T x V grid");
  SimulatedData d{ParticleMatrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(V)),
                  ParticleMatrix::Zero(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(V))};
  bool has_x = true;
  for (const auto& e : entries) {
    d.y(static_cast<Eigen::Index>(e.t), static_cast<Eigen::Index>(e.v)) = e.y;
    if (e.x) d.x(static_cast<Eigen::Index>(e.t), static_cast<Eigen::Index>(e.v)) = *e.x;
    else has_x = false;
  }
  if (!has_x) d.x.resize(0, 0);
  return d;
}

namespace {

VertexSet component_vertices(const ExperimentConfig& config, std::size_t V) {
  if (config.component_vertex) {
    if (*config.component_vertex >= V)
      throw ConfigError("'component_vertex' " + std::to_string(*config.component_vertex) + " is not < V = " +
                        std::to_string(V));
    return {*config.component_vertex};
  }
  VertexSet all(V);
  for (std::size_t v = 0; v < V; ++v) all[v] = v;
  return all;
}

}  // namespace

FunctionalPtr make_functional(const ExperimentConfig& config, const LatticeModel& model,
                              const ParticleMatrix& y) {
  switch (config.functional) {
    case FunctionalKind::CrossLag:
      return std::make_shared<CrossLagFunctional>(model.graph(), config.functional_ring);
    case FunctionalKind::SuffStats: return std::make_shared<SuffStatFunctional>(model.graph(), y);
    case FunctionalKind::Score: return std::make_shared<ScoreFunctional>(model, y);
    case FunctionalKind::ComponentMean:
      return std::make_shared<ComponentMeanFunctional>(component_vertices(config, model.dim()),
                                                       config.component_time);
  }
  throw ConfigError("unknown functional");
}

Eigen::VectorXd exact_functional_value(const ExperimentConfig& config, const LatticeModel& model,
                                       const ParticleMatrix& y) {
  switch (config.functional) {
    case FunctionalKind::CrossLag: {
      const SuffStats s = exact_suff_stats(model, y);
      return Eigen::VectorXd::Constant(1, s.t2[static_cast<Eigen::Index>(config.functional_ring)]);
    }
    case FunctionalKind::SuffStats: return exact_suff_stats(model, y).to_flat();
    case FunctionalKind::Score: return exact_score(model, y);
    case FunctionalKind::ComponentMean: {
      const auto verts = component_vertices(config, model.dim());
      const SmoothingMoments m = rts_smoother(model, y);
      Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(verts.size()));
      for (std::size_t t = 0; t < m.means.size(); ++t) {
        if (config.component_time && *config.component_time != t) continue;
        for (std::size_t j = 0; j < verts.size(); ++j)
          out[static_cast<Eigen::Index>(j)] += m.means[t][static_cast<Eigen::Index>(verts[j])];
      }
      return out;
    }
  }
  throw ConfigError("unknown functional");
}

std::vector<std::string> functional_component_ids(const ExperimentConfig& config, std::size_t V) {
  std::vector<std::string> ids;
  const std::size_t nb = config.radius + 1;
  switch (config.functional) {
    case FunctionalKind::CrossLag: ids.push_back("cross_lag_" + std::to_string(config.functional_ring)); break;
    case FunctionalKind::SuffStats:
      for (std::size_t r = 0; r < nb; ++r)
        for (std::size_t q = 0; q < nb; ++q) ids.push_back("t1_" + std::to_string(r) + "_" + std::to_string(q));
      for (std::size_t r = 0; r < nb; ++r) ids.push_back("t2_" + std::to_string(r));
      ids.insert(ids.end(), {"t3", "t3_first", "t4"});
      break;
    case FunctionalKind::Score:
      for (std::size_t r = 0; r < nb + 2; ++r) ids.push_back("score_" + std::to_string(r));
      break;
    case FunctionalKind::ComponentMean: {
      const std::string prefix = config.component_time ? "x_" + std::to_string(*config.component_time) + "_" : "x_";
      for (Vertex v : component_vertices(config, V)) ids.push_back(prefix + std::to_string(v));
      break;
    }
  }
  return ids;
}

std::vector<ResultRow> run_smoothing_experiment(const ExperimentConfig& config,
                                                const std::vector<std::size_t>& dims) {
  const std::string hash = config.hash();
  const std::size_t R = config.replicates;
  const std::size_t nm = config.methods.size();
  std::vector<std::vector<ResultRow>> buffers(dims.size() * R);

  parallel_for(0, buffers.size(), [&](std::size_t job) {
    const std::size_t V = dims[job / R];
    const std::size_t r = job % R;
    const std::uint64_t rep_seed = replicate_seed(config.seed, V, r);
    auto& rows = buffers[job];
    auto base_row = [&](const MethodSpec& m) {
      ResultRow row;
      row.replicate = r;
      row.V = V;
      row.method = to_string(m.smoother);
      row.filter = m.smoother == SmootherKind::Exact ? "none" : to_string(m.filter);
      row.block_size = config.block_size;
      row.i = config.enlargement;
      row.N = config.N;
      row.M = config.M;
      row.seed = config.seed;
      row.config_hash = hash;
      return row;
    };
    auto fail_all = [&](const std::string& msg, std::size_t from) {
      for (std::size_t mi = from; mi < nm; ++mi) {
        ResultRow row = base_row(config.methods[mi]);
        row.functional_id = to_string(config.functional);
        row.error = msg;
        rows.push_back(row);
      }
    };

    std::optional<LatticeModel> model;
    SimulatedData data;
    Eigen::VectorXd exact;
    FunctionalPtr functional;
    std::vector<std::string> ids;
    std::optional<BlockPartition> partition;
    try {
      model.emplace(build_lattice(V, config.radius), config.theta_true);
      data = simulate_data(*model, config.T, rep_seed);
      ids = functional_component_ids(config, V);
      functional = make_functional(config, *model, data.y);
      exact = exact_functional_value(config, *model, data.y);
      partition.emplace(BlockPartition::contiguous(model->graph(), config.block_size, config.enlargement));
    } catch (const Error& e) {
      fail_all(e.what(), 0);
      return;
    }
    const double scale = config.normalize ? 1.0 / static_cast<double>(V) : 1.0;

    std::map<FilterProviderKind, FilterApproximation> providers;
    for (std::size_t mi = 0; mi < nm; ++mi) {
      const MethodSpec& m = config.methods[mi];
      const auto start = std::chrono::steady_clock::now();
      Eigen::VectorXd est;
      try {
        if (m.smoother == SmootherKind::Exact) {
          est = exact;
        } else {
          const FilterProviderKind kind = provider_for(m.smoother, m.filter);
          auto it = providers.find(kind);
          if (it == providers.end()) {
            const std::uint64_t pseed = derive_seed(rep_seed, StreamTag::Propose, {static_cast<std::uint64_t>(kind)});
            it = providers
                     .emplace(kind, make_filter_provider(kind, *model, *partition, data.y, config.N,
                                                         config.proposal, pseed))
                     .first;
          }
          const FilterApproximation& filter = it->second;
          const std::uint64_t bseed = derive_seed(rep_seed, StreamTag::BackwardSample, {mi});
          switch (m.smoother) {
            case SmootherKind::StandardFS: est = forward_smoothing(*model, filter, *functional).total; break;
            case SmootherKind::StandardBS:
              est = backward_sampling(*model, filter, *functional, config.M, bseed).total;
              break;
            case SmootherKind::BlockedFS:
              est = blocked_forward_smoothing(*model, *partition, filter, *functional).total;
              break;
            case SmootherKind::BlockedBS:
              est = blocked_backward_sampling(*model, *partition, filter, *functional, config.M, bseed).total;
              break;
            case SmootherKind::Exact: break;
          }
        }
      } catch (const Error& e) {
        ResultRow row = base_row(m);
        row.functional_id = to_string(config.functional);
        row.error = e.what();
        rows.push_back(row);
        continue;
      }
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      for (std::size_t j = 0; j < ids.size(); ++j) {
        ResultRow row = base_row(m);
        row.functional_id = ids[j];
        row.estimate = est[static_cast<Eigen::Index>(j)] * scale;
        row.exact_value = exact[static_cast<Eigen::Index>(j)] * scale;
        const double d = *row.estimate - *row.exact_value;
        row.squared_error = d * d;
        if (config.record_runtime) row.runtime_ms = ms;
        rows.push_back(row);
      }
    }
  });

  std::vector<ResultRow> out;
  for (auto& b : buffers)
    for (auto& r : b) out.push_back(std::move(r));
  return out;
}

namespace {

std::string opt(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out =
      "replicate,V,method,filter,block_size,i,N,M,functional_id,estimate,exact_value,squared_error,runtime_ms,"
      "seed,config_hash,error\n";
  for (const auto& r : rows) {
    out += std::to_string(r.replicate) + "," + std::to_string(r.V) + "," + r.method + "," + r.filter + "," +
           std::to_string(r.block_size) + "," + std::to_string(r.i) + "," + std::to_string(r.N) + "," +
           std::to_string(r.M) + "," + r.functional_id + "," + opt(r.estimate) + "," + opt(r.exact_value) + "," +
           opt(r.squared_error) + "," + opt(r.runtime_ms) + "," + std::to_string(r.seed) + "," + r.config_hash +
           "," + csv_escape(r.error) + "\n";
  }
  return out;
}

std::vector<TraceRow> run_estimation_experiment(const ExperimentConfig& config) {
  if (config.T < 2) throw ConfigError("estimation needs T >= 2");
  const std::string hash = config.hash();
  const std::size_t R = config.replicates;
  const std::size_t nm = config.methods.size();
  const std::size_t na = config.algorithms.size();
  const std::size_t V = config.V;
  const Eigen::VectorXd truth = config.theta_true.to_vector();
  std::vector<std::vector<TraceRow>> buffers(R * nm * na);

  parallel_for(0, buffers.size(), [&](std::size_t job) {
    const std::size_t r = job / (nm * na);
    const std::size_t mi = (job / na) % nm;
    const std::size_t ai = job % na;
    const MethodSpec& m = config.methods[mi];
    const Algorithm alg = config.algorithms[ai];
    const std::uint64_t rep_seed = replicate_seed(config.seed, V, r);
    std::string label = to_string(alg) + "_" + to_string(m.smoother);
    if (m.smoother != SmootherKind::Exact) label += "_" + to_string(m.filter);
    auto& rows = buffers[job];
    try {
      const SpatialGraph graph = build_lattice(V, config.radius);
      const LatticeModel truth_model(graph, config.theta_true);
      const SimulatedData data = simulate_data(truth_model, config.T, rep_seed);
      const ModelParams init = config.theta_init ? *config.theta_init : random_theta(config.radius, rep_seed);
      const EstimatorConfig ec = config.estimator(m);
      const std::uint64_t est_seed = derive_seed(rep_seed, StreamTag::Iteration, {mi, ai});
      EstimationTrace trace;
      if (alg == Algorithm::Gradient) {
        AscentOptions opts;
        opts.iterations = config.iterations;
        opts.stop_threshold = config.stop_threshold;
        trace = gradient_ascent(init, make_score_estimator(graph, data.y, ec, est_seed), opts);
      } else {
        trace = em_loop(init, make_stats_estimator(graph, data.y, ec, est_seed), config.iterations,
                        sum_of_squares(data.y), V, config.T);
      }
      for (std::size_t p = 0; p < trace.iterates.size(); ++p) {
        TraceRow row;
        row.p = p + 1;
        row.theta = trace.iterates[p];
        row.err = (row.theta.to_vector() - truth).cwiseAbs();
        row.method = label;
        row.run = r;
        row.seed = config.seed;
        row.config_hash = hash;
        rows.push_back(row);
      }
    } catch (const Error& e) {
      TraceRow row;
      row.method = label;
      row.run = r;
      row.seed = config.seed;
      row.config_hash = hash;
      row.error = e.what();
      rows.push_back(row);
    }
  });

  std::vector<TraceRow> out;
  for (auto& b : buffers)
    for (auto& row : b) out.push_back(std::move(row));
  return out;
}

std::string traces_csv(const std::vector<TraceRow>& rows, std::size_t radius) {
  const std::size_t D = radius + 3;
  std::string out = "p";
  for (std::size_t j = 0; j < D; ++j) out += ",theta_" + std::to_string(j);
  for (std::size_t j = 0; j < D; ++j) out += ",err_" + std::to_string(j);
  out += ",method,run,seed,config_hash,error\n";
  for (const auto& r : rows) {
    out += r.error.empty() ? std::to_string(r.p) : std::string();
    const Eigen::VectorXd th = r.error.empty() ? r.theta.to_vector() : Eigen::VectorXd();
    for (std::size_t j = 0; j < D; ++j)
      out += "," + (r.error.empty() ? format_double(th[static_cast<Eigen::Index>(j)]) : std::string());
    for (std::size_t j = 0; j < D; ++j)
      out += "," + (r.error.empty() ? format_double(r.err[static_cast<Eigen::Index>(j)]) : std::string());
    out += "," + r.method + "," + std::to_string(r.run) + "," + std::to_string(r.seed) + "," + r.config_hash + "," +
           csv_escape(r.error) + "\n";
  }
  return out;
}

std::string oracle_query(const ExperimentConfig& config, const std::string& query,
                         const std::optional<SimulatedData>& data) {
  const std::size_t V = data ? static_cast<std::size_t>(data->y.cols()) : config.V;
  const LatticeModel model(build_lattice(V, config.radius), config.theta_true);
  const ParticleMatrix y = data ? data->y : simulate_data(model, config.T, replicate_seed(config.seed, V, 0)).y;
  std::string out;
  auto moments_csv = [&](const std::vector<Eigen::VectorXd>& means, const std::vector<Eigen::MatrixXd>& covs) {
    out = "t,v,mean,var\n";
    for (std::size_t t = 0; t < means.size(); ++t)
      for (std::size_t v = 0; v < V; ++v) {
        const auto vi = static_cast<Eigen::Index>(v);
        out += std::to_string(t) + "," + std::to_string(v) + "," + format_double(means[t][vi]) + "," +
               format_double(covs[t](vi, vi)) + "\n";
      }
  };
  if (query == "loglik") {
    out = "quantity,value\nloglik," + format_double(kalman_filter(model, y).loglik) + "\n";
  } else if (query == "means") {
    const SmoothingMoments m = rts_smoother(model, y);
    moments_csv(m.means, m.covs);
  } else if (query == "suffstats" || query == "score") {
    ExperimentConfig c = config;
    c.functional = query == "score" ? FunctionalKind::Score : FunctionalKind::SuffStats;
    const auto ids = functional_component_ids(c, V);
    const Eigen::VectorXd values = exact_functional_value(c, model, y);
    out = "quantity,value\n";
    for (std::size_t j = 0; j < ids.size(); ++j)
      out += ids[j] + "," + format_double(values[static_cast<Eigen::Index>(j)]) + "\n";
  } else if (query == "tilde") {
    const auto partition = BlockPartition::contiguous(model.graph(), config.block_size, config.enlargement);
    const auto beliefs = tilde_filter(model, partition, y);
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (const auto& b : beliefs) {
      means.push_back(b.mean);
      covs.push_back(b.cov);
    }
    moments_csv(means, covs);
  } else if (query == "filter") {
    const auto kf = kalman_filter(model, y);
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covs;
    for (const auto& b : kf.filtered) {
      means.push_back(b.mean);
      covs.push_back(b.cov);
    }
    moments_csv(means, covs);
  } else {
    throw ConfigError("unknown oracle query '" + query + "' (expected loglik, means, suffstats, score, tilde or filter)");
  }
  return out;
}

}  // namespace bps
