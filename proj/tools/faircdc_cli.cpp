#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "faircdc/dataio.hpp"
#include "faircdc/experiments.hpp"
#include "faircdc/fairtrain.hpp"
#include "faircdc/nn.hpp"
#include "faircdc/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
  f.flush();
  if (!f.good()) throw std::runtime_error("write failed for " + path);
}

std::string iso_utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex16(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string trim_copy(const std::string& s) {
  const char* ws = " \t\r\n";
  const std::size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim_copy(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& cell, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size())
    throw std::runtime_error(what + ": cannot parse \"" + cell + "\" as a number");
  return v;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  for (const std::string& item : split_list(s)) out.push_back(parse_double(item, flag));
  if (out.empty()) throw std::runtime_error(flag + ": empty list");
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const std::string& flag) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(s)) {
    const double v = parse_double(item, flag);
    if (v < 0.0 || v != std::floor(v))
      throw std::runtime_error(flag + ": \"" + item + "\" is not a nonnegative integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw std::runtime_error(flag + ": empty list");
  return out;
}

void write_manifest(const std::string& dir, const std::string& command, std::uint64_t seed,
                    const ordered_json& config, const std::vector<std::string>& outputs) {
  ordered_json m;
  m["tool"] = "faircdc";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = seed;
  m["timestamp"] = iso_utc_now();
  m["config"] = config;
  m["outputs"] = outputs;
  write_file(dir + "/manifest.json", m.dump(2) + "\n");
}

// Builds a matrix from named columns of a parsed CSV with a header row.
faircdc::Matrix columns_matrix(const std::vector<std::vector<std::string>>& rows,
                               const std::string& list, const std::string& flag) {
  const std::vector<std::string> names = split_list(list);
  if (names.empty()) throw std::runtime_error(flag + ": no columns given");
  if (rows.size() < 2)
    throw std::runtime_error("csv needs a header row and at least one data row");
  const std::vector<std::string>& header = rows[0];
  std::vector<std::size_t> idx;
  for (const std::string& name : names) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw std::runtime_error(flag + ": column \"" + name + "\" not found in the csv header");
    idx.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  faircdc::Matrix m(rows.size() - 1, idx.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw std::runtime_error("csv row " + std::to_string(r) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(rows[r].size()));
    for (std::size_t j = 0; j < idx.size(); ++j)
      m(r - 1, j) = parse_double(rows[r][idx[j]],
                                 "csv row " + std::to_string(r) + ", column \"" + names[j] + "\"");
  }
  return m;
}

double relative_gap(double a, double b) {
  return std::fabs(a - b) / std::max(std::fabs(b), 1e-12);
}

ordered_json config_json(const faircdc::TrainConfig& cfg) {
  ordered_json j;
  j["hidden"] = cfg.hidden;
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["momentum"] = cfg.momentum;
  j["lr_decay"] = cfg.lr_decay;
  j["lr_milestones"] = cfg.lr_milestones;
  j["penalty"] = faircdc::to_string(cfg.penalty.kind);
  j["bandwidth"] = cfg.penalty.fixed_bandwidth;
  j["lambda_init"] = cfg.lambda_init;
  j["beta"] = cfg.beta;
  if (std::isinf(cfg.lambda_max))
    j["lambda_max"] = nullptr;
  else
    j["lambda_max"] = cfg.lambda_max;
  j["seed"] = cfg.seed;
  return j;
}

faircdc::TrainConfig config_from_json_file(const std::string& path, faircdc::TrainConfig cfg) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config file " + path + ": expected an object");
  static const std::set<std::string> known = {
      "hidden", "epochs", "batch",       "lr",          "momentum", "lr_decay",
      "lr_milestones", "penalty", "bandwidth", "lambda_init", "beta",     "lambda_max",
      "seed"};
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw std::runtime_error("config file " + path + ": unknown key \"" + item.key() + "\"");
  if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("batch")) cfg.batch = j.at("batch").get<std::size_t>();
  if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
  if (j.contains("momentum")) cfg.momentum = j.at("momentum").get<double>();
  if (j.contains("lr_decay")) cfg.lr_decay = j.at("lr_decay").get<double>();
  if (j.contains("lr_milestones"))
    cfg.lr_milestones = j.at("lr_milestones").get<std::vector<std::size_t>>();
  if (j.contains("penalty"))
    cfg.penalty.kind = faircdc::penalty_kind_from_string(j.at("penalty").get<std::string>());
  if (j.contains("bandwidth")) cfg.penalty.fixed_bandwidth = j.at("bandwidth").get<double>();
  if (j.contains("lambda_init")) cfg.lambda_init = j.at("lambda_init").get<double>();
  if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
  if (j.contains("lambda_max"))
    cfg.lambda_max = j.at("lambda_max").is_null() ? std::numeric_limits<double>::infinity()
                                                  : j.at("lambda_max").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

// Shared data-source options: either a schema-described CSV or the synthetic
// generator.
struct SourceCli {
  std::string data;
  std::string schema;
  bool synth = false;
  std::size_t synth_n = 4000;
  double synth_bias = 0.9;
  double synth_balance = 0.5;
};

void add_source_options(CLI::App* sub, SourceCli& s) {
  sub->add_option("--data", s.data, "Input CSV path");
  sub->add_option("--schema", s.schema, "Dataset schema JSON path");
  sub->add_flag("--synth", s.synth, "Use the built-in synthetic biased dataset");
  sub->add_option("--synth-n", s.synth_n, "Synthetic sample count")->capture_default_str();
  sub->add_option("--synth-bias", s.synth_bias, "Synthetic bias strength in [0, 1]")
      ->capture_default_str();
  sub->add_option("--synth-balance", s.synth_balance, "Synthetic positive-class rate")
      ->capture_default_str();
}

std::vector<std::string> validate_source(const SourceCli& s) {
  std::vector<std::string> errs;
  const bool csv = !s.data.empty() || !s.schema.empty();
  if (s.synth && csv) errs.push_back("--synth cannot be combined with --data/--schema");
  if (!s.synth && !csv) errs.push_back("either --synth or --data with --schema is required");
  if (!s.synth && csv) {
    if (s.data.empty()) errs.push_back("--data is required without --synth");
    if (s.schema.empty()) errs.push_back("--schema is required without --synth");
  }
  if (s.synth) {
    if (s.synth_n < 100) errs.push_back("--synth-n: must be at least 100");
    if (s.synth_bias < 0.0 || s.synth_bias > 1.0)
      errs.push_back("--synth-bias: must be in [0, 1]");
    if (!(s.synth_balance > 0.0 && s.synth_balance < 1.0))
      errs.push_back("--synth-balance: must be in (0, 1)");
  }
  return errs;
}

ordered_json source_json(const SourceCli& s) {
  ordered_json j;
  if (s.synth) {
    j["kind"] = "synth";
    j["n"] = s.synth_n;
    j["bias"] = s.synth_bias;
    j["balance"] = s.synth_balance;
  } else {
    j["kind"] = "csv";
    j["data"] = s.data;
    j["schema"] = s.schema;
  }
  return j;
}

// Training options on top of the data source; flags override --config values.
struct TrainCli {
  SourceCli src;
  std::string config;
  std::string out_dir;
  std::string cache_dir;
  std::string hidden = "128,128,128";
  std::size_t epochs = 40;
  std::size_t batch = 1024;
  double lr = 0.1;
  double momentum = 0.9;
  double lr_decay = 10.0;
  std::string milestones = "15,30";
  std::string penalty = "none";
  double bandwidth = 0.0;
  double lambda_init = 0.0;
  double beta = 0.0;
  double lambda_max = 0.0;
  std::uint64_t seed = 0;
  std::string fractions = "0.7,0.15,0.15";
};

void add_train_options(CLI::App* sub, TrainCli& o, bool with_penalty_flags,
                       bool with_fractions) {
  add_source_options(sub, o.src);
  sub->add_option("--config", o.config, "JSON file with training settings; flags override it");
  sub->add_option("--hidden", o.hidden, "Comma list of hidden layer widths")
      ->capture_default_str();
  sub->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
  sub->add_option("--batch", o.batch, "Minibatch size")->capture_default_str();
  sub->add_option("--lr", o.lr, "Initial learning rate")->capture_default_str();
  sub->add_option("--momentum", o.momentum, "SGD momentum")->capture_default_str();
  sub->add_option("--lr-decay", o.lr_decay, "Learning-rate divisor at each milestone")
      ->capture_default_str();
  sub->add_option("--lr-milestones", o.milestones, "Comma list of decay epochs")
      ->capture_default_str();
  if (with_penalty_flags) {
    sub->add_option("--penalty", o.penalty, "Penalty kind: none, dc or cdc")
        ->capture_default_str();
    sub->add_option("--lambda-init", o.lambda_init, "Initial dual variable")
        ->capture_default_str();
  }
  sub->add_option("--bandwidth", o.bandwidth,
                  "Fixed kernel bandwidth for cdc; 0 selects the per-batch rule of thumb")
      ->capture_default_str();
  sub->add_option("--beta", o.beta, "Dual ascent step size")->capture_default_str();
  sub->add_option("--lambda-max", o.lambda_max, "Ceiling on the dual variable");
  sub->add_option("--seed", o.seed, "Master seed")->capture_default_str();
  if (with_fractions)
    sub->add_option("--fractions", o.fractions, "Train,val,test fractions")
        ->capture_default_str();
  sub->add_option("--out-dir", o.out_dir, "Output directory")->required();
}

faircdc::TrainConfig resolve_config(const CLI::App& sub, const TrainCli& o) {
  faircdc::TrainConfig cfg;
  if (!o.config.empty()) cfg = config_from_json_file(o.config, cfg);
  if (sub.count("--hidden")) cfg.hidden = parse_sizes(o.hidden, "--hidden");
  if (sub.count("--epochs")) cfg.epochs = o.epochs;
  if (sub.count("--batch")) cfg.batch = o.batch;
  if (sub.count("--lr")) cfg.lr = o.lr;
  if (sub.count("--momentum")) cfg.momentum = o.momentum;
  if (sub.count("--lr-decay")) cfg.lr_decay = o.lr_decay;
  if (sub.count("--lr-milestones")) cfg.lr_milestones = parse_sizes(o.milestones, "--lr-milestones");
  if (sub.get_option_no_throw("--penalty") && sub.count("--penalty"))
    cfg.penalty.kind = faircdc::penalty_kind_from_string(o.penalty);
  if (sub.count("--bandwidth")) cfg.penalty.fixed_bandwidth = o.bandwidth;
  if (sub.get_option_no_throw("--lambda-init") && sub.count("--lambda-init"))
    cfg.lambda_init = o.lambda_init;
  if (sub.count("--beta")) cfg.beta = o.beta;
  if (sub.count("--lambda-max")) cfg.lambda_max = o.lambda_max;
  if (sub.count("--seed")) cfg.seed = o.seed;
  return cfg;
}

std::vector<std::string> validate_config(const faircdc::TrainConfig& cfg) {
  std::vector<std::string> errs;
  if (cfg.hidden.empty()) errs.push_back("hidden: at least one layer width is required");
  for (std::size_t h : cfg.hidden)
    if (h == 0) {
      errs.push_back("hidden: layer widths must be positive");
      break;
    }
  if (cfg.batch < 2) errs.push_back("batch: must be at least 2, got " + std::to_string(cfg.batch));
  if (!(cfg.lr > 0.0)) errs.push_back("lr: must be positive");
  if (cfg.momentum < 0.0) errs.push_back("momentum: must be nonnegative");
  if (!(cfg.lr_decay > 0.0)) errs.push_back("lr_decay: must be positive");
  if (cfg.penalty.fixed_bandwidth < 0.0) errs.push_back("bandwidth: must be nonnegative");
  if (cfg.lambda_init < 0.0) errs.push_back("lambda_init: must be nonnegative");
  if (cfg.beta < 0.0) errs.push_back("beta: must be nonnegative");
  if (!(cfg.lambda_max > 0.0)) errs.push_back("lambda_max: must be positive");
  return errs;
}

std::array<double, 3> parse_fractions(const std::string& s, std::vector<std::string>& errs) {
  std::array<double, 3> f = faircdc::kDefaultFractions;
  try {
    const std::vector<double> v = parse_doubles(s, "--fractions");
    if (v.size() != 3) {
      errs.push_back("--fractions: expected three values");
      return f;
    }
    double sum = 0.0;
    for (double x : v) {
      if (!(x > 0.0)) errs.push_back("--fractions: every fraction must be positive");
      sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-9) errs.push_back("--fractions: values must sum to 1");
    f = {v[0], v[1], v[2]};
  } catch (const std::exception& e) {
    errs.push_back(e.what());
  }
  return f;
}

int report_errors(const std::vector<std::string>& errs) {
  for (const std::string& e : errs) std::cerr << "config error: " << e << "\n";
  return 1;
}

// stat subcommand options.
struct StatCli {
  std::string input;
  std::string y, z, u;
  double h = 0.0;
  bool silverman = false;
  bool check = false;
  std::string out_dir;
};

int cmd_stat(const StatCli& o, bool conditional, bool h_given) {
  const auto rows = faircdc::parse_csv(read_file(o.input));
  const faircdc::Matrix y = columns_matrix(rows, o.y, "--y");
  const faircdc::Matrix z = columns_matrix(rows, o.z, "--z");

  ordered_json out;
  ordered_json config;
  config["input"] = o.input;
  config["y"] = split_list(o.y);
  config["z"] = split_list(o.z);
  if (conditional) {
    if (h_given && o.silverman)
      throw std::runtime_error("--bandwidth and --silverman are mutually exclusive");
    const faircdc::Matrix u = columns_matrix(rows, o.u, "--u");
    const double h = h_given ? o.h : faircdc::silverman_bandwidth(u.rows(), u.cols());
    if (!(h > 0.0)) throw std::runtime_error("--bandwidth: must be positive");
    const faircdc::CdcResult r = faircdc::cdc_stat(y, z, u, h);
    out["statistic"] = "cdcov";
    out["value"] = r.value;
    out["n"] = r.n;
    out["bandwidth"] = r.bandwidth;
    if (o.check)
      out["check_gap"] = relative_gap(r.value, faircdc::cdc_stat_direct(y, z, u, h).value);
    config["u"] = split_list(o.u);
    config["bandwidth"] = h;
    config["silverman"] = !h_given;
  } else {
    const faircdc::DcovResult r = faircdc::dcov(y, z);
    out["statistic"] = "dcov";
    out["value"] = r.value;
    out["n"] = r.n;
    if (o.check) out["check_gap"] = relative_gap(r.value, faircdc::dcov_direct(y, z).value);
  }
  config["check"] = o.check;

  std::cout << out.dump(2) << "\n";
  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    write_file(o.out_dir + "/result.json", out.dump(2) + "\n");
    write_manifest(o.out_dir, conditional ? "stat cdcov" : "stat dcov", 0, config,
                   {"result.json"});
  }
  return 0;
}

// Loads the encoded splits for train, optionally through the binary dataset
// cache keyed by the csv bytes, schema text, fractions and seed.
faircdc::DataSplits prepare_splits(const TrainCli& o, const std::array<double, 3>& fractions,
                                   std::uint64_t seed, faircdc::Preprocessor* pre) {
  if (o.cache_dir.empty())
    return faircdc::prepare_csv(o.src.data, faircdc::DatasetSchema::from_json_file(o.src.schema),
                                fractions, seed, pre);

  std::string key_text = read_file(o.src.data) + "\x1f" + read_file(o.src.schema) + "\x1f";
  for (double f : fractions) key_text += nlohmann::json(f).dump() + ",";
  key_text += "\x1f" + std::to_string(seed);
  const std::string base = o.cache_dir + "/" + hex16(faircdc::fnv1a(key_text));
  const std::string names[3] = {base + "_train.bin", base + "_val.bin", base + "_test.bin"};
  const std::string pre_path = base + "_pre.json";

  faircdc::DataSplits splits;
  if (fs::exists(names[0]) && fs::exists(names[1]) && fs::exists(names[2]) &&
      fs::exists(pre_path)) {
    splits.train = faircdc::load_dataset_cache(names[0]);
    splits.val = faircdc::load_dataset_cache(names[1]);
    splits.test = faircdc::load_dataset_cache(names[2]);
    *pre = faircdc::Preprocessor::from_json(read_file(pre_path));
    return splits;
  }
  fs::create_directories(o.cache_dir);
  splits = faircdc::prepare_csv(o.src.data, faircdc::DatasetSchema::from_json_file(o.src.schema),
                                fractions, seed, pre);
  faircdc::save_dataset_cache(splits.train, names[0]);
  faircdc::save_dataset_cache(splits.val, names[1]);
  faircdc::save_dataset_cache(splits.test, names[2]);
  write_file(pre_path, pre->to_json());
  return splits;
}

int cmd_train(const CLI::App& sub, const TrainCli& o) {
  faircdc::TrainConfig cfg = resolve_config(sub, o);
  std::vector<std::string> errs = validate_config(cfg);
  const std::vector<std::string> src_errs = validate_source(o.src);
  errs.insert(errs.end(), src_errs.begin(), src_errs.end());
  const std::array<double, 3> fractions = parse_fractions(o.fractions, errs);
  if (!errs.empty()) return report_errors(errs);

  faircdc::DataSplits splits;
  faircdc::Preprocessor pre;
  int positive_class = 1;
  if (o.src.synth) {
    const faircdc::Dataset d =
        faircdc::synth_biased(o.src.synth_n, o.src.synth_bias, o.src.synth_balance, cfg.seed);
    splits = faircdc::split(d, fractions, cfg.seed);
  } else {
    splits = prepare_splits(o, fractions, cfg.seed, &pre);
    positive_class = pre.positive_class;
  }

  const faircdc::TrainResult res = faircdc::fit(splits.train, splits.val, cfg, positive_class);
  const faircdc::FairnessReport rep = faircdc::evaluate(res.model, splits.test, positive_class);

  fs::create_directories(o.out_dir);
  std::vector<std::string> outputs = {"checkpoint.json", "history.jsonl", "report.json"};
  faircdc::save_checkpoint(res.model, o.out_dir + "/checkpoint.json");
  write_file(o.out_dir + "/history.jsonl", faircdc::history_jsonl(res.history));
  write_file(o.out_dir + "/report.json", rep.to_json() + "\n");
  if (!o.src.synth) {
    write_file(o.out_dir + "/preprocessor.json", pre.to_json());
    outputs.push_back("preprocessor.json");
  }

  ordered_json config;
  config["source"] = source_json(o.src);
  config["fractions"] = fractions;
  config["positive_class"] = positive_class;
  config["train"] = config_json(cfg);
  write_manifest(o.out_dir, "train", cfg.seed, config, outputs);

  std::cout << rep.to_json() << "\n";
  return 0;
}

struct EvalCli {
  SourceCli src;
  std::string model;
  std::string preprocessor;
  std::string out_dir;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalCli& o) {
  std::vector<std::string> errs = validate_source(o.src);
  if (!o.src.synth && o.preprocessor.empty())
    errs.push_back("--preprocessor is required with --data");
  if (!errs.empty()) return report_errors(errs);

  const faircdc::Mlp model = faircdc::load_checkpoint(o.model);
  faircdc::Dataset d;
  int positive_class = 1;
  std::size_t unseen = 0;
  if (o.src.synth) {
    d = faircdc::synth_biased(o.src.synth_n, o.src.synth_bias, o.src.synth_balance, o.seed);
  } else {
    const auto schema = faircdc::DatasetSchema::from_json_file(o.src.schema);
    const auto table = faircdc::load_csv(o.src.data, schema);
    const auto pre = faircdc::Preprocessor::from_json(read_file(o.preprocessor));
    std::vector<std::size_t> rows(table.n_rows);
    std::iota(rows.begin(), rows.end(), 0);
    d = pre.apply(table, rows, &unseen);
    positive_class = pre.positive_class;
  }

  const faircdc::FairnessReport rep = faircdc::evaluate(model, d, positive_class);

  fs::create_directories(o.out_dir);
  write_file(o.out_dir + "/report.json", rep.to_json() + "\n");
  ordered_json config;
  config["model"] = o.model;
  config["source"] = source_json(o.src);
  if (!o.src.synth) config["preprocessor"] = o.preprocessor;
  config["positive_class"] = positive_class;
  config["unseen_categories"] = unseen;
  write_manifest(o.out_dir, "eval", o.seed, config, {"report.json"});

  std::cout << rep.to_json() << "\n";
  return 0;
}

struct ConvergeCli {
  std::string stat = "dcov";
  bool dependent = false;
  std::string n_grid = "32,128,512";
  std::size_t trials = 100;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int cmd_converge(const ConvergeCli& o) {
  const std::vector<std::size_t> grid = parse_sizes(o.n_grid, "--n-grid");
  const std::vector<faircdc::ConvergenceTrial> rows =
      o.stat == "dcov"
          ? faircdc::convergence_study_dc(o.dependent, grid, o.trials, o.epsilon, o.seed)
          : faircdc::convergence_study_cdc(o.dependent, grid, o.trials, o.epsilon, o.seed);

  const std::string stem =
      faircdc::convergence_stem(o.stat, o.dependent, grid, o.trials, o.epsilon, o.seed);
  const std::string summary = faircdc::convergence_summary_json(rows);

  fs::create_directories(o.out_dir);
  write_file(o.out_dir + "/" + stem + ".csv", faircdc::convergence_trials_csv(rows));
  write_file(o.out_dir + "/" + stem + ".json", summary);

  ordered_json config;
  config["stat"] = o.stat;
  config["dependent"] = o.dependent;
  config["n_grid"] = grid;
  config["trials"] = o.trials;
  config["epsilon"] = o.epsilon;
  write_manifest(o.out_dir, "converge", o.seed, config, {stem + ".csv", stem + ".json"});

  std::cout << summary;
  return 0;
}

struct TradeoffCli {
  TrainCli train;
  std::string lambdas = "0.5,2,8";
  std::string kinds = "dc,cdc";
  std::size_t num_seeds = 5;
};

int cmd_tradeoff(const CLI::App& sub, const TradeoffCli& o) {
  faircdc::TrainConfig base = resolve_config(sub, o.train);
  std::vector<std::string> errs = validate_config(base);
  const std::vector<std::string> src_errs = validate_source(o.train.src);
  errs.insert(errs.end(), src_errs.begin(), src_errs.end());
  if (o.num_seeds == 0) errs.push_back("--num-seeds: must be positive");
  std::vector<double> lambda_grid;
  std::vector<faircdc::PenaltyKind> kinds;
  try {
    lambda_grid = parse_doubles(o.lambdas, "--lambdas");
    for (const std::string& k : split_list(o.kinds))
      kinds.push_back(faircdc::penalty_kind_from_string(k));
    if (kinds.empty()) errs.push_back("--kinds: empty list");
  } catch (const std::exception& e) {
    errs.push_back(e.what());
  }
  if (!errs.empty()) return report_errors(errs);

  faircdc::Dataset data;
  int positive_class = 1;
  if (o.train.src.synth) {
    data = faircdc::synth_biased(o.train.src.synth_n, o.train.src.synth_bias,
                                 o.train.src.synth_balance, o.train.seed);
  } else {
    const auto schema = faircdc::DatasetSchema::from_json_file(o.train.src.schema);
    const auto table = faircdc::load_csv(o.train.src.data, schema);
    std::vector<std::size_t> rows(table.n_rows);
    std::iota(rows.begin(), rows.end(), 0);
    const auto pre = faircdc::fit_preprocessor(table, schema, rows);
    data = pre.apply(table, rows);
    positive_class = pre.positive_class;
  }

  std::vector<std::uint64_t> seeds(o.num_seeds);
  std::iota(seeds.begin(), seeds.end(), o.train.seed);

  const std::vector<faircdc::TradeoffPoint> points =
      faircdc::tradeoff_sweep(data, lambda_grid, kinds, seeds, base, positive_class);
  const std::vector<faircdc::TradeoffCell> cells = faircdc::aggregate_tradeoff(points);
  const std::string stem = faircdc::tradeoff_stem(lambda_grid, kinds, seeds, o.train.seed);
  const std::string summary = faircdc::tradeoff_summary_json(cells);

  fs::create_directories(o.train.out_dir);
  write_file(o.train.out_dir + "/" + stem + "_points.csv", faircdc::tradeoff_points_csv(points));
  write_file(o.train.out_dir + "/" + stem + "_cells.csv", faircdc::tradeoff_cells_csv(cells));
  write_file(o.train.out_dir + "/" + stem + ".json", summary);

  ordered_json config;
  config["source"] = source_json(o.train.src);
  config["lambdas"] = lambda_grid;
  config["kinds"] = split_list(o.kinds);
  config["seeds"] = seeds;
  config["positive_class"] = positive_class;
  config["train"] = config_json(base);
  write_manifest(o.train.out_dir, "tradeoff", o.train.seed, config,
                 {stem + "_points.csv", stem + "_cells.csv", stem + ".json"});

  std::cout << summary;
  return 0;
}

void apply_thread_cap() {
#ifdef _OPENMP
  if (const char* v = std::getenv("FAIRCDC_THREADS")) {
    const int k = std::atoi(v);
    if (k > 0) omp_set_num_threads(k);
  }
#endif
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_cap();

  CLI::App app{"Dependence statistics and fair classifier training"};
  app.set_version_flag("--version", std::string("faircdc ") + kVersion);
  app.require_subcommand(1);

  auto* stat = app.add_subcommand("stat", "Compute a dependence statistic from csv columns");
  stat->require_subcommand(1);
  StatCli so;
  auto* stat_dcov = stat->add_subcommand("dcov", "Distance covariance between column sets");
  auto* stat_cdcov =
      stat->add_subcommand("cdcov", "Conditional distance covariance given conditioning columns");
  CLI::Option* h_opt = nullptr;
  for (CLI::App* s : {stat_dcov, stat_cdcov}) {
    s->add_option("--input", so.input, "CSV file with a header row")->required();
    s->add_option("--y", so.y, "Comma list of y columns")->required();
    s->add_option("--z", so.z, "Comma list of z columns")->required();
    s->add_flag("--check", so.check, "Also run the direct-definition route and report the gap");
    s->add_option("--out-dir", so.out_dir, "Write result.json and manifest.json here");
  }
  stat_cdcov->add_option("--u", so.u, "Comma list of conditioning columns")->required();
  h_opt = stat_cdcov->add_option("--bandwidth", so.h, "Kernel bandwidth");
  stat_cdcov->add_flag("--silverman", so.silverman,
                       "Rule-of-thumb bandwidth from n and the u width (default)");

  TrainCli to;
  auto* train = app.add_subcommand("train", "Train a classifier with an optional fairness penalty");
  add_train_options(train, to, true, true);
  train->add_option("--cache-dir", to.cache_dir, "Directory for encoded dataset caching");

  EvalCli eo;
  auto* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint on a dataset");
  add_source_options(eval, eo.src);
  eval->add_option("--model", eo.model, "checkpoint.json path")->required();
  eval->add_option("--preprocessor", eo.preprocessor, "preprocessor.json from the training run");
  eval->add_option("--seed", eo.seed, "Seed for the synthetic source")->capture_default_str();
  eval->add_option("--out-dir", eo.out_dir, "Output directory")->required();

  ConvergeCli co;
  auto* converge = app.add_subcommand("converge", "Monte-Carlo convergence study");
  converge->add_option("--stat", co.stat, "Statistic: dcov or cdcov")
      ->check(CLI::IsMember({"dcov", "cdcov"}))
      ->capture_default_str();
  converge->add_flag("--dependent", co.dependent,
                     "Draw dependent pairs with a high-n reference target instead of "
                     "(conditionally) independent pairs");
  converge->add_option("--n-grid", co.n_grid, "Comma list of sample sizes")
      ->capture_default_str();
  converge->add_option("--trials", co.trials, "Trials per sample size")->capture_default_str();
  converge->add_option("--epsilon", co.epsilon, "Deviation threshold for the exceed rate")
      ->capture_default_str();
  converge->add_option("--seed", co.seed, "Master seed")->capture_default_str();
  converge->add_option("--out-dir", co.out_dir, "Output directory")->required();

  TradeoffCli po;
  auto* tradeoff =
      app.add_subcommand("tradeoff", "Sweep penalty weights into accuracy-fairness curves");
  add_train_options(tradeoff, po.train, false, false);
  tradeoff->add_option("--lambdas", po.lambdas, "Comma list of initial dual values")
      ->capture_default_str();
  tradeoff->add_option("--kinds", po.kinds, "Comma list of penalty kinds")
      ->capture_default_str();
  tradeoff->add_option("--num-seeds", po.num_seeds, "Seeds per grid cell, master seed ascending")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (stat_dcov->parsed()) return cmd_stat(so, false, false);
    if (stat_cdcov->parsed()) return cmd_stat(so, true, h_opt->count() > 0);
    if (train->parsed()) return cmd_train(*train, to);
    if (eval->parsed()) return cmd_eval(eo);
    if (converge->parsed()) return cmd_converge(co);
    if (tradeoff->parsed()) return cmd_tradeoff(*tradeoff, po);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
