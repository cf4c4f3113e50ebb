#include "doptlab/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace doptlab {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open file: " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ValidationError("cannot write file: " + path.string());
  }
  out << content;
  if (!out) {
    throw ValidationError("write failed: " + path.string());
  }
}

// Tokenized reader for the structured-text documents.
class TextDocument {
 public:
  TextDocument(std::string text, std::string path) : stream_(std::move(text)), path_(std::move(path)) {}

  std::string next_token() {
    std::string token;
    if (!(stream_ >> token)) {
      throw ValidationError(path_ + ": unexpected end of document");
    }
    return token;
  }

  void expect(const std::string& token) {
    const std::string got = next_token();
    if (got != token) {
      throw ValidationError(path_ + ": expected '" + token + "', found '" + got + "'");
    }
  }

  long long next_integer(const std::string& key) {
    expect(key);
    const std::string token = next_token();
    try {
      std::size_t used = 0;
      const long long value = std::stoll(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      return value;
    } catch (const std::exception&) {
      throw ValidationError(path_ + ": invalid integer for '" + key + "': " + token);
    }
  }

  double next_double() {
    const std::string token = next_token();
    try {
      std::size_t used = 0;
      const double value = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      return value;
    } catch (const std::exception&) {
      throw ValidationError(path_ + ": invalid real number: " + token);
    }
  }

  void read_array(const std::string& name, std::vector<double>& out, std::size_t count) {
    expect(name);
    out.resize(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = next_double();
  }

  void expect_end() {
    std::string token;
    if (stream_ >> token) {
      throw ValidationError(path_ + ": trailing content starting at '" + token + "'");
    }
  }

 private:
  std::istringstream stream_;
  std::string path_;
};

void append_array(std::ostringstream& out, const std::string& name,
                  std::span<const double> values, int per_line) {
  out << name << "\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]);
    out << ((static_cast<int>(i % per_line) == per_line - 1 || i + 1 == values.size()) ? "\n"
                                                                                       : " ");
  }
}

int positive_dim(long long value, const char* name, const std::string& path) {
  if (value < 1 || value > 1'000'000) {
    throw ValidationError(path + ": dimension '" + std::string(name) + "' out of range");
  }
  return static_cast<int>(value);
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::uint64_t fnv1a_hash(const std::string& text) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (unsigned char byte : text) {
    hash ^= byte;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

void save_mdp(const FiniteMdp& mdp, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "dopt-mdp 1\n";
  out << "num_states " << mdp.num_states << "\n";
  out << "num_actions " << mdp.num_actions << "\n";
  out << "horizon " << mdp.horizon << "\n";
  append_array(out, "transition", mdp.transition, mdp.num_states);
  append_array(out, "reward", mdp.reward, mdp.num_actions);
  append_array(out, "initial_dist", mdp.initial_dist, mdp.num_states);
  write_file(path, out.str());
}

FiniteMdp load_mdp(const std::filesystem::path& path) {
  TextDocument doc(read_file(path), path.string());
  doc.expect("dopt-mdp");
  doc.expect("1");
  FiniteMdp mdp;
  mdp.num_states = positive_dim(doc.next_integer("num_states"), "num_states", path.string());
  mdp.num_actions = positive_dim(doc.next_integer("num_actions"), "num_actions", path.string());
  mdp.horizon = positive_dim(doc.next_integer("horizon"), "horizon", path.string());
  const std::size_t sa = static_cast<std::size_t>(mdp.num_states) * mdp.num_actions;
  doc.read_array("transition", mdp.transition, sa * mdp.num_states);
  doc.read_array("reward", mdp.reward, sa);
  doc.read_array("initial_dist", mdp.initial_dist, static_cast<std::size_t>(mdp.num_states));
  doc.expect_end();
  mdp.validate();
  return mdp;
}

void save_policy(const TimedPolicy& policy, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "dopt-policy 1\n";
  out << "horizon " << policy.horizon << "\n";
  out << "num_states " << policy.num_states << "\n";
  out << "num_actions " << policy.num_actions << "\n";
  append_array(out, "probs", policy.probs, policy.num_actions);
  write_file(path, out.str());
}

TimedPolicy load_policy(const std::filesystem::path& path) {
  TextDocument doc(read_file(path), path.string());
  doc.expect("dopt-policy");
  doc.expect("1");
  TimedPolicy policy;
  policy.horizon = positive_dim(doc.next_integer("horizon"), "horizon", path.string());
  policy.num_states = positive_dim(doc.next_integer("num_states"), "num_states", path.string());
  policy.num_actions =
      positive_dim(doc.next_integer("num_actions"), "num_actions", path.string());
  doc.read_array("probs", policy.probs,
                 static_cast<std::size_t>(policy.horizon) * policy.num_states *
                     policy.num_actions);
  doc.expect_end();
  policy.validate();
  return policy;
}

namespace {

void append_tsa(std::ostringstream& out, const std::string& name, const TsaTable& table) {
  append_array(out, name, table.data(), table.num_actions());
}

void append_ts(std::ostringstream& out, const std::string& name, const TsTable& table) {
  append_array(out, name, table.data(), table.num_states());
}

}  // namespace

void save_value_tables(const ValueTables& tables, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "dopt-tables 1\n";
  out << "horizon " << tables.q.horizon() << "\n";
  out << "num_states " << tables.q.num_states() << "\n";
  out << "num_actions " << tables.q.num_actions() << "\n";
  append_tsa(out, "q", tables.q);
  append_ts(out, "v", tables.v);
  append_tsa(out, "nu", tables.nu);
  append_tsa(out, "u", tables.u);
  write_file(path, out.str());
}

ValueTables load_value_tables(const std::filesystem::path& path) {
  TextDocument doc(read_file(path), path.string());
  doc.expect("dopt-tables");
  doc.expect("1");
  const int horizon = positive_dim(doc.next_integer("horizon"), "horizon", path.string());
  const int num_states =
      positive_dim(doc.next_integer("num_states"), "num_states", path.string());
  const int num_actions =
      positive_dim(doc.next_integer("num_actions"), "num_actions", path.string());
  ValueTables tables{TsaTable(horizon, num_states, num_actions), TsTable(horizon, num_states),
                     TsaTable(horizon, num_states, num_actions),
                     TsaTable(horizon, num_states, num_actions)};
  doc.read_array("q", tables.q.data(), tables.q.data().size());
  doc.read_array("v", tables.v.data(), tables.v.data().size());
  doc.read_array("nu", tables.nu.data(), tables.nu.data().size());
  doc.read_array("u", tables.u.data(), tables.u.data().size());
  doc.expect_end();
  return tables;
}

void save_baseline(const Baseline& baseline, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "dopt-baseline 1\n";
  out << "horizon " << baseline.b.horizon() << "\n";
  out << "num_states " << baseline.b.num_states() << "\n";
  out << "num_actions " << baseline.b.num_actions() << "\n";
  append_tsa(out, "b", baseline.b);
  append_ts(out, "b_bar", baseline.b_bar);
  write_file(path, out.str());
}

Baseline load_baseline(const std::filesystem::path& path) {
  TextDocument doc(read_file(path), path.string());
  doc.expect("dopt-baseline");
  doc.expect("1");
  const int horizon = positive_dim(doc.next_integer("horizon"), "horizon", path.string());
  const int num_states =
      positive_dim(doc.next_integer("num_states"), "num_states", path.string());
  const int num_actions =
      positive_dim(doc.next_integer("num_actions"), "num_actions", path.string());
  Baseline baseline{TsaTable(horizon, num_states, num_actions), TsTable(horizon, num_states)};
  doc.read_array("b", baseline.b.data(), baseline.b.data().size());
  doc.read_array("b_bar", baseline.b_bar.data(), baseline.b_bar.data().size());
  doc.expect_end();
  return baseline;
}

void save_dataset_jsonl(const TupleDataset& dataset, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const LoggedTuple& record : dataset.records) {
    nlohmann::ordered_json line;
    line["t"] = record.t;
    line["s"] = record.s;
    line["a"] = record.a;
    line["r"] = record.r;
    line["s_next"] = record.s_next;
    out << line.dump() << "\n";
  }
  write_file(path, out.str());
}

TupleDataset load_dataset_jsonl(const std::filesystem::path& path, const ModelDims* dims) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open dataset: " + path.string());
  }
  TupleDataset dataset;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    line_number += 1;
    if (line.empty()) continue;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& error) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_number << ": invalid JSON: " << error.what();
      throw ValidationError(msg.str());
    }
    LoggedTuple record;
    try {
      record.t = parsed.at("t").get<int>();
      record.s = parsed.at("s").get<int>();
      record.a = parsed.at("a").get<int>();
      record.r = parsed.at("r").get<double>();
      record.s_next = parsed.at("s_next").get<int>();
    } catch (const nlohmann::json::exception& error) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_number << ": missing or mistyped field: "
          << error.what();
      throw ValidationError(msg.str());
    }
    if (dims != nullptr) {
      const bool in_range = record.t >= 0 && record.t < dims->horizon && record.s >= 0 &&
                            record.s < dims->num_states && record.a >= 0 &&
                            record.a < dims->num_actions && record.s_next >= 0 &&
                            record.s_next < dims->num_states;
      if (!in_range) {
        std::ostringstream msg;
        msg << path.string() << ":" << line_number << ": record out of range for dims (T="
            << dims->horizon << ", S=" << dims->num_states << ", A=" << dims->num_actions << ")";
        throw ValidationError(msg.str());
      }
    }
    dataset.records.push_back(record);
  }
  return dataset;
}

void write_eval_run_csv(const EvalRun& run, double truth, std::ostream& out) {
  out << "episode_index,estimate,running_mean,running_abs_error_vs_truth\n";
  double cumulative = 0.0;
  for (std::size_t i = 0; i < run.samples.size(); ++i) {
    cumulative += run.samples[i];
    const double mean = cumulative / static_cast<double>(i + 1);
    out << (i + 1) << "," << format_double(run.samples[i]) << "," << format_double(mean) << ","
        << format_double(std::abs(mean - truth)) << "\n";
  }
}

void write_eval_run_csv(const EvalRun& run, double truth, const std::filesystem::path& path) {
  std::ostringstream out;
  write_eval_run_csv(run, truth, out);
  write_file(path, out.str());
}

namespace {

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const std::uint64_t parsed = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ValidationError("config: invalid unsigned integer for '" + key + "': " + value);
  }
}

int parse_int(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const int parsed = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ValidationError("config: invalid integer for '" + key + "': " + value);
  }
}

double parse_real(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ValidationError("config: invalid real for '" + key + "': " + value);
  }
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream stream(value);
  while (std::getline(stream, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig config;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(stream, line)) {
    line_number += 1;
    const std::size_t comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    std::istringstream parts(line);
    std::string key;
    if (!(parts >> key)) continue;
    std::string value;
    std::getline(parts, value);
    const std::size_t start = value.find_first_not_of(" \t");
    value = start == std::string::npos ? std::string() : value.substr(start);
    const std::size_t end = value.find_last_not_of(" \t\r");
    value = end == std::string::npos ? std::string() : value.substr(0, end + 1);
    if (value.empty()) {
      throw ValidationError("config line " + std::to_string(line_number) + ": key '" + key +
                            "' has no value");
    }

    if (key == "env") config.env = value;
    else if (key == "grid_n") config.grid_n = parse_int(value, key);
    else if (key == "grid_slip") config.grid_slip = parse_real(value, key);
    else if (key == "reward_seed") config.reward_seed = parse_u64(value, key);
    else if (key == "mdp_file") config.mdp_file = value;
    else if (key == "target_policy_file") config.target_policy_file = value;
    else if (key == "num_policies") config.num_policies = parse_int(value, key);
    else if (key == "policy_seed") config.policy_seed = parse_u64(value, key);
    else if (key == "offline_episodes") config.offline_episodes = parse_int(value, key);
    else if (key == "offline_logging_policies")
      config.offline_logging_policies = parse_int(value, key);
    else if (key == "offline_seed") config.offline_seed = parse_u64(value, key);
    else if (key == "estimators") config.estimators = split_list(value);
    else if (key == "episodes") config.episodes = parse_int(value, key);
    else if (key == "runs_per_policy") config.runs_per_policy = parse_int(value, key);
    else if (key == "master_seed") config.master_seed = parse_u64(value, key);
    else if (key == "out_dir") config.out_dir = value;
    else {
      throw ValidationError("config line " + std::to_string(line_number) + ": unknown key '" +
                            key + "'");
    }
  }

  if (config.episodes < 1) throw ValidationError("config: episodes must be >= 1");
  if (config.runs_per_policy < 1) throw ValidationError("config: runs_per_policy must be >= 1");
  if (config.num_policies < 1) throw ValidationError("config: num_policies must be >= 1");
  if (config.env != "gridworld" && config.env != "mdp_file") {
    throw ValidationError("config: env must be 'gridworld' or 'mdp_file'");
  }
  if (config.env == "mdp_file" && config.mdp_file.empty()) {
    throw ValidationError("config: env mdp_file requires mdp_file <path>");
  }
  if (config.estimators.empty()) throw ValidationError("config: estimator list is empty");
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path));
}

}  // namespace doptlab
