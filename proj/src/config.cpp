#include "psm/config.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "psm/common.hpp"

namespace psm {

void RunConfig::validate() const {
  if (common_images == 0) throw ValidationError("RunConfig: common_images must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ValidationError("RunConfig: test_fraction must be in [0, 1)");
  if (supervision != "auto" && supervision != "fixations" && supervision != "rasters")
    throw ValidationError("RunConfig: supervision must be auto|fixations|rasters");
  if (!(gt_sigma >= 0.0)) throw ValidationError("RunConfig: gt_sigma must be >= 0");
  if (!(similarity_temperature > 0.0))
    throw ValidationError("RunConfig: similarity_temperature must be > 0");
  regression.validate();
}

namespace {

// Minimal TOML reader covering what the config needs: [section] headers and
// `key = value` lines where value is an integer, float, bool, "string", or a
// flat array of numbers. Comments start with '#'.
struct TomlValue {
  std::string raw;
};

using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>;

std::string strip(const std::string& text) {
  std::size_t begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  std::size_t end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

TomlTable parse_toml(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  TomlTable table;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // Strip comments outside of strings.
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line = line.substr(0, i);
        break;
      }
    }
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ValidationError("config: " + path + " line " + std::to_string(line_no) +
                              ": malformed section header");
      section = strip(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config: " + path + " line " + std::to_string(line_no) +
                            ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ValidationError("config: " + path + " line " + std::to_string(line_no) +
                            ": empty key or value");
    table[section][key] = TomlValue{value};
  }
  return table;
}

double toml_number(const TomlValue& value, const std::string& what) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(value.raw, &used);
    if (used != value.raw.size()) throw std::invalid_argument("trailing");
    return parsed;
  } catch (const std::exception&) {
    throw ValidationError("config: bad number for " + what + ": '" + value.raw + "'");
  }
}

bool toml_bool(const TomlValue& value, const std::string& what) {
  if (value.raw == "true") return true;
  if (value.raw == "false") return false;
  throw ValidationError("config: bad boolean for " + what + ": '" + value.raw + "'");
}

std::string toml_string(const TomlValue& value, const std::string& what) {
  if (value.raw.size() >= 2 && value.raw.front() == '"' && value.raw.back() == '"')
    return value.raw.substr(1, value.raw.size() - 2);
  throw ValidationError("config: expected \"string\" for " + what + ": '" + value.raw + "'");
}

std::vector<double> toml_number_array(const TomlValue& value, const std::string& what) {
  if (value.raw.size() < 2 || value.raw.front() != '[' || value.raw.back() != ']')
    throw ValidationError("config: expected [array] for " + what + ": '" + value.raw + "'");
  std::vector<double> numbers;
  std::stringstream body(value.raw.substr(1, value.raw.size() - 2));
  std::string item;
  while (std::getline(body, item, ',')) {
    item = strip(item);
    if (item.empty()) continue;
    numbers.push_back(toml_number(TomlValue{item}, what));
  }
  return numbers;
}

void build_grid(RunConfig& cfg, const std::vector<double>& ranks,
                const std::vector<double>& lambdas, bool use_paper_grid) {
  if (use_paper_grid) {
    cfg.sweep_grid = paper_grid();
    return;
  }
  for (double rank : ranks) {
    if (rank < 1.0) throw ValidationError("config: sweep ranks must be >= 1");
    for (double lambda : lambdas)
      cfg.sweep_grid.push_back(GridCell{static_cast<std::size_t>(rank), lambda});
  }
}

RunConfig from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }

  RunConfig cfg;
  try {
    if (doc.contains("run")) {
      const auto& run = doc["run"];
      cfg.common_images = run.value("common_images", cfg.common_images);
      cfg.split_seed = run.value("split_seed", cfg.split_seed);
      cfg.test_fraction = run.value("test_fraction", cfg.test_fraction);
      cfg.strict = run.value("strict", cfg.strict);
      cfg.out_dir = run.value("out", cfg.out_dir);
      cfg.supervision = run.value("supervision", cfg.supervision);
      cfg.gt_sigma = run.value("gt_sigma", cfg.gt_sigma);
      cfg.similarity_temperature =
          run.value("similarity_temperature", cfg.similarity_temperature);
    }
    if (doc.contains("regression")) {
      const auto& regression = doc["regression"];
      cfg.regression.rank = regression.value("rank", cfg.regression.rank);
      cfg.regression.lambda = regression.value("lambda", cfg.regression.lambda);
      cfg.regression.max_sweeps = regression.value("max_sweeps", cfg.regression.max_sweeps);
      cfg.regression.rel_tol = regression.value("rel_tol", cfg.regression.rel_tol);
      cfg.regression.seed = regression.value("seed", cfg.regression.seed);
      cfg.regression.working_d1 = regression.value("working_d1", cfg.regression.working_d1);
      cfg.regression.working_d2 = regression.value("working_d2", cfg.regression.working_d2);
      cfg.regression.center_targets =
          regression.value("center_targets", cfg.regression.center_targets);
    }
    if (doc.contains("sweep")) {
      const auto& sweep = doc["sweep"];
      build_grid(cfg, sweep.value("ranks", std::vector<double>{}),
                 sweep.value("lambdas", std::vector<double>{}),
                 sweep.value("paper_grid", false));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }
  return cfg;
}

RunConfig from_toml(const std::string& path) {
  const TomlTable table = parse_toml(path);
  for (const auto& [section, entries] : table)
    if (section != "run" && section != "regression" && section != "sweep")
      throw ValidationError("config: " + path + ": unknown section [" + section + "]");

  RunConfig cfg;
  if (const auto run = table.find("run"); run != table.end()) {
    for (const auto& [key, value] : run->second) {
      if (key == "common_images")
        cfg.common_images = static_cast<std::size_t>(toml_number(value, key));
      else if (key == "split_seed")
        cfg.split_seed = static_cast<std::uint64_t>(toml_number(value, key));
      else if (key == "test_fraction")
        cfg.test_fraction = toml_number(value, key);
      else if (key == "strict")
        cfg.strict = toml_bool(value, key);
      else if (key == "out")
        cfg.out_dir = toml_string(value, key);
      else if (key == "supervision")
        cfg.supervision = toml_string(value, key);
      else if (key == "gt_sigma")
        cfg.gt_sigma = toml_number(value, key);
      else if (key == "similarity_temperature")
        cfg.similarity_temperature = toml_number(value, key);
      else
        throw ValidationError("config: " + path + ": unknown key run." + key);
    }
  }
  if (const auto regression = table.find("regression"); regression != table.end()) {
    for (const auto& [key, value] : regression->second) {
      if (key == "rank")
        cfg.regression.rank = static_cast<std::size_t>(toml_number(value, key));
      else if (key == "lambda")
        cfg.regression.lambda = toml_number(value, key);
      else if (key == "max_sweeps")
        cfg.regression.max_sweeps = static_cast<std::size_t>(toml_number(value, key));
      else if (key == "rel_tol")
        cfg.regression.rel_tol = toml_number(value, key);
      else if (key == "seed")
        cfg.regression.seed = static_cast<std::uint64_t>(toml_number(value, key));
      else if (key == "working_d1")
        cfg.regression.working_d1 = static_cast<std::size_t>(toml_number(value, key));
      else if (key == "working_d2")
        cfg.regression.working_d2 = static_cast<std::size_t>(toml_number(value, key));
      else if (key == "center_targets")
        cfg.regression.center_targets = toml_bool(value, key);
      else
        throw ValidationError("config: " + path + ": unknown key regression." + key);
    }
  }
  if (const auto sweep = table.find("sweep"); sweep != table.end()) {
    std::vector<double> ranks, lambdas;
    bool use_paper_grid = false;
    for (const auto& [key, value] : sweep->second) {
      if (key == "ranks")
        ranks = toml_number_array(value, key);
      else if (key == "lambdas")
        lambdas = toml_number_array(value, key);
      else if (key == "paper_grid")
        use_paper_grid = toml_bool(value, key);
      else
        throw ValidationError("config: " + path + ": unknown key sweep." + key);
    }
    build_grid(cfg, ranks, lambdas, use_paper_grid);
  }
  return cfg;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string extension = dot == std::string::npos ? "" : path.substr(dot);
  RunConfig cfg;
  if (extension == ".json")
    cfg = from_json(path);
  else if (extension == ".toml")
    cfg = from_toml(path);
  else
    throw ValidationError("config: unsupported extension '" + extension +
                          "' (expected .json or .toml)");
  cfg.validate();
  return cfg;
}

}  // namespace psm
