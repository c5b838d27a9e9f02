#include "run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "hmme/error.hpp"

namespace hmme::cli {

namespace {

namespace pt = boost::property_tree;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty())
    throw ConfigError(key + ": cannot parse '" + text + "'");
  return value;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(key + ": empty list element");
    out.push_back(parse_number<std::size_t>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string join(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Drops a trailing " ; comment" or " # comment" and surrounding blanks.
std::string strip_inline_comment(const std::string& raw) {
  std::string text = raw;
  for (std::size_t i = 1; i < text.size(); ++i) {
    if ((text[i] == ';' || text[i] == '#') && (text[i - 1] == ' ' || text[i - 1] == '\t')) {
      text.resize(i);
      break;
    }
  }
  const auto e = text.find_last_not_of(" \t");
  return e == std::string::npos ? std::string() : text.substr(0, e + 1);
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data.train", [](RunConfig& c, auto&, auto& v) { c.train_path = v; }},
      {"data.test", [](RunConfig& c, auto&, auto& v) { c.test_path = v; }},
      {"data.sequence_column", [](RunConfig& c, auto&, auto& v) { c.sequence_column = v; }},
      {"data.label_column", [](RunConfig& c, auto&, auto& v) { c.label_column = v; }},
      {"data.imbalance_ratio", [](RunConfig& c, auto& k, auto& v) { c.imbalance_ratio = parse_number<double>(k, v); }},
      {"data.calibration_fraction",
       [](RunConfig& c, auto& k, auto& v) { c.calibration_fraction = parse_number<double>(k, v); }},
      {"ensemble.n_positive",
       [](RunConfig& c, auto& k, auto& v) { c.ensemble.n_positive = parse_number<std::size_t>(k, v); }},
      {"ensemble.n_negative",
       [](RunConfig& c, auto& k, auto& v) { c.ensemble.n_negative = parse_number<std::size_t>(k, v); }},
      {"ensemble.subset_factor",
       [](RunConfig& c, auto& k, auto& v) { c.ensemble.subset_factor = parse_number<double>(k, v); }},
      {"ensemble.state_counts", [](RunConfig& c, auto& k, auto& v) { c.ensemble.state_counts = parse_list(k, v); }},
      {"ensemble.shared_init_count",
       [](RunConfig& c, auto& k, auto& v) { c.ensemble.shared_init_count = parse_number<std::size_t>(k, v); }},
      {"train.max_iters",
       [](RunConfig& c, auto& k, auto& v) { c.ensemble.train.max_iters = parse_number<std::size_t>(k, v); }},
      {"train.tol", [](RunConfig& c, auto& k, auto& v) { c.ensemble.train.tol = parse_number<double>(k, v); }},
      {"train.floor", [](RunConfig& c, auto& k, auto& v) { c.ensemble.train.floor = parse_number<double>(k, v); }},
      {"mlp.hidden_dims", [](RunConfig& c, auto& k, auto& v) { c.mlp.hidden_dims = parse_list(k, v); }},
      {"mlp.dropout", [](RunConfig& c, auto& k, auto& v) { c.mlp.dropout = parse_number<double>(k, v); }},
      {"mlp.learning_rate", [](RunConfig& c, auto& k, auto& v) { c.mlp.learning_rate = parse_number<double>(k, v); }},
      {"mlp.batch_size", [](RunConfig& c, auto& k, auto& v) { c.mlp.batch_size = parse_number<std::size_t>(k, v); }},
      {"mlp.epochs", [](RunConfig& c, auto& k, auto& v) { c.mlp.epochs = parse_number<std::size_t>(k, v); }},
      {"mlp.holdout_fraction",
       [](RunConfig& c, auto& k, auto& v) { c.mlp_holdout_fraction = parse_number<double>(k, v); }},
      {"generate.class", [](RunConfig& c, auto&, auto& v) { c.generate_class = v; }},
      {"generate.count", [](RunConfig& c, auto& k, auto& v) { c.generate_count = parse_number<std::size_t>(k, v); }},
      {"generate.length",
       [](RunConfig& c, auto& k, auto& v) { c.generate_length = parse_number<std::size_t>(k, v); }},
      {"run.out", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; }},
      {"run.seed", [](RunConfig& c, auto& k, auto& v) { c.apply_seed(parse_number<std::uint64_t>(k, v)); }},
      {"run.threads", [](RunConfig& c, auto& k, auto& v) { c.threads = parse_number<int>(k, v); }},
  };
  return table;
}

// Re-throws a module validation failure as a config error.
template <typename F>
void check(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ParameterError& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

void check_fraction(const std::string& key, double v) {
  if (!(v > 0.0 && v < 1.0)) throw ConfigError(key + ": must lie in (0, 1)");
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t master) {
  seed = master;
  ensemble.master_seed = master;
  ensemble.train.seed = master;
  mlp.seed = derive_seed(master, static_cast<std::uint64_t>(SeedStream::kMlp));
}

void RunConfig::validate() const {
  if (!(imbalance_ratio >= 1.0)) throw ConfigError("data.imbalance_ratio: must be >= 1");
  check_fraction("data.calibration_fraction", calibration_fraction);
  check_fraction("mlp.holdout_fraction", mlp_holdout_fraction);
  check("[ensemble]", [&] { ensemble.validate(); });
  {
    MlpConfig probe = mlp;
    probe.input_dim = 1;
    check("[mlp]", [&] { probe.validate(); });
  }
  if (generate_class != "positive" && generate_class != "negative")
    throw ConfigError("generate.class: must be 'positive' or 'negative'");
  if (generate_count < 1) throw ConfigError("generate.count: must be >= 1");
  if (generate_length < 1) throw ConfigError("generate.length: must be >= 1");
  if (threads < 0) throw ConfigError("run.threads: must be >= 0");
  for (const auto& [key, path] : {std::pair{"data.train", train_path}, std::pair{"data.test", test_path}}) {
    if (!path.empty() && !std::filesystem::exists(path))
      throw ConfigError(std::string(key) + ": file not found: " + path.string());
  }
}

RunConfig default_run_config() {
  RunConfig config;
  config.apply_seed(0);
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig config = default_run_config();
  // Seed first so that later keys see the final master seed.
  if (auto seed = tree.get_optional<std::string>("run.seed"))
    setters().at("run.seed")(config, "run.seed", strip_inline_comment(*seed));
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(section + ": key outside any section");
    for (const auto& [name, node] : body) {
      const std::string key = section + "." + name;
      const auto it = setters().find(key);
      if (it == setters().end()) throw ConfigError(key + ": unknown key");
      it->second(config, key, strip_inline_comment(node.data()));
    }
  }
  // Dataset paths are relative to the config file.
  for (auto* data : {&config.train_path, &config.test_path})
    if (!data->empty() && data->is_relative()) *data = (path.parent_path() / *data).lexically_normal();
  config.validate();
  return config;
}

std::string render_config(const RunConfig& c) {
  std::ostringstream out;
  out << "[data]\n"
      << "train = " << c.train_path.string() << '\n'
      << "test = " << c.test_path.string() << '\n'
      << "sequence_column = " << c.sequence_column << '\n'
      << "label_column = " << c.label_column << '\n'
      << "imbalance_ratio = " << format_double(c.imbalance_ratio) << '\n'
      << "calibration_fraction = " << format_double(c.calibration_fraction) << "\n\n"
      << "[ensemble]\n"
      << "n_positive = " << c.ensemble.n_positive << '\n'
      << "n_negative = " << c.ensemble.n_negative << '\n'
      << "subset_factor = " << format_double(c.ensemble.subset_factor) << '\n'
      << "state_counts = " << join(c.ensemble.state_counts) << '\n'
      << "shared_init_count = " << c.ensemble.shared_init_count << "\n\n"
      << "[train]\n"
      << "max_iters = " << c.ensemble.train.max_iters << '\n'
      << "tol = " << format_double(c.ensemble.train.tol) << '\n'
      << "floor = " << format_double(c.ensemble.train.floor) << "\n\n"
      << "[mlp]\n"
      << "hidden_dims = " << join(c.mlp.hidden_dims) << '\n'
      << "dropout = " << format_double(c.mlp.dropout) << '\n'
      << "learning_rate = " << format_double(c.mlp.learning_rate) << '\n'
      << "batch_size = " << c.mlp.batch_size << '\n'
      << "epochs = " << c.mlp.epochs << '\n'
      << "holdout_fraction = " << format_double(c.mlp_holdout_fraction) << "\n\n"
      << "[generate]\n"
      << "class = " << c.generate_class << '\n'
      << "count = " << c.generate_count << '\n'
      << "length = " << c.generate_length << "\n\n"
      << "[run]\n"
      << "out = " << c.out_dir.string() << '\n'
      << "seed = " << c.seed << '\n';
  // Thread count is left out: it never changes results.
  return out.str();
}

std::string config_hash(const RunConfig& config) {
  // The output directory only says where artifacts go; leave it out so that
  // runs into different directories carry the same hash.
  RunConfig hashed = config;
  hashed.out_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : render_config(hashed)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t stream_seed(const RunConfig& config, SeedStream stream) {
  return derive_seed(config.seed, static_cast<std::uint64_t>(stream));
}

}  // namespace hmme::cli
