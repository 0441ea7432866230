#include "mmnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmnet/error.hpp"

namespace mmnet {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char probe[64];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(probe, "%lf", &back);
    if (back == v) return probe;
  }
  return buf;
}

double RunConfig::effective_gamma() const {
  if (lr_decay > 0.0) return lr_decay;
  if (epochs <= 1) return 1.0;
  return std::pow(0.01, 1.0 / (epochs - 1));
}

void RunConfig::validate() const {
  if (dataset_dir.empty()) {
    if (synth_subjects < 1 || synth_classes < 1 || synth_samples_per < 1) {
      throw ConfigError(
          "config needs either dataset_dir or a full synth spec "
          "(synth_subjects, synth_classes, synth_samples_per)");
    }
    if (synth_classes > 5)
      throw ConfigError("the synthetic generator supports at most 5 classes");
    if (synth_classes != num_classes)
      throw ConfigError("num_classes must match synth_classes");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (n_layers < 1) throw ConfigError("n_layers must be at least 1");
  if (n_heads < 1 || 512 % n_heads != 0)
    throw ConfigError("n_heads must divide the 512-wide token dimension");
  if (lr0 <= 0.0) throw ConfigError("lr0 must be positive");
  if (lr_decay < 0.0 || lr_decay > 1.0)
    throw ConfigError("lr_decay must lie in (0,1] or 0 for automatic");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (attn_mode != "continuous" && attn_mode != "independent")
    throw ConfigError("attn_mode must be continuous or independent");
}

std::string RunConfig::canonical_text() const {
  std::ostringstream os;
  os << "mmnet-config 1\n";
  os << "dataset_dir = " << dataset_dir << "\n";
  os << "synth_subjects = " << synth_subjects << "\n";
  os << "synth_classes = " << synth_classes << "\n";
  os << "synth_samples_per = " << synth_samples_per << "\n";
  os << "num_classes = " << num_classes << "\n";
  os << "use_ca = " << (use_ca ? "true" : "false") << "\n";
  os << "use_pc = " << (use_pc ? "true" : "false") << "\n";
  os << "attn_mode = " << attn_mode << "\n";
  os << "n_layers = " << n_layers << "\n";
  os << "n_heads = " << n_heads << "\n";
  os << "lr0 = " << format_double(lr0) << "\n";
  os << "lr_decay = " << format_double(lr_decay) << "\n";
  os << "epochs = " << epochs << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "weight_decay = " << format_double(weight_decay) << "\n";
  os << "seed = " << seed << "\n";
  os << "out_dir = " << out_dir << "\n";
  return os.str();
}

std::uint64_t RunConfig::digest() const {
  const std::string text = canonical_text();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string RunConfig::digest_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(digest()));
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v +
                    "'");
}

long long parse_int(const std::string& v, const std::string& key) {
  long long out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "' expects an integer, got '" +
                      v + "'");
  return out;
}

double parse_real(const std::string& v, const std::string& key) {
  double out = 0.0;
  if (std::sscanf(v.c_str(), "%lf", &out) != 1)
    throw ConfigError("config key '" + key + "' expects a number, got '" + v +
                      "'");
  return out;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || trim(line) != "mmnet-config 1")
    throw ConfigError("config must start with the header 'mmnet-config 1'");
  RunConfig cfg;
  while (std::getline(is, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("malformed config line: '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "dataset_dir") {
      cfg.dataset_dir = value;
    } else if (key == "synth_subjects") {
      cfg.synth_subjects = static_cast<int>(parse_int(value, key));
    } else if (key == "synth_classes") {
      cfg.synth_classes = static_cast<int>(parse_int(value, key));
    } else if (key == "synth_samples_per") {
      cfg.synth_samples_per = static_cast<int>(parse_int(value, key));
    } else if (key == "num_classes") {
      cfg.num_classes = static_cast<int>(parse_int(value, key));
    } else if (key == "use_ca") {
      cfg.use_ca = parse_bool(value, key);
    } else if (key == "use_pc") {
      cfg.use_pc = parse_bool(value, key);
    } else if (key == "attn_mode") {
      cfg.attn_mode = value;
    } else if (key == "n_layers") {
      cfg.n_layers = static_cast<int>(parse_int(value, key));
    } else if (key == "n_heads") {
      cfg.n_heads = static_cast<int>(parse_int(value, key));
    } else if (key == "lr0") {
      cfg.lr0 = parse_real(value, key);
    } else if (key == "lr_decay") {
      cfg.lr_decay = parse_real(value, key);
    } else if (key == "epochs") {
      cfg.epochs = static_cast<int>(parse_int(value, key));
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(parse_int(value, key));
    } else if (key == "weight_decay") {
      cfg.weight_decay = parse_real(value, key);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else if (key == "out_dir") {
      cfg.out_dir = value;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse(os.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config file: " + path);
  out << canonical_text();
  if (!out) throw IoError("failed writing config file: " + path);
}

}  // namespace mmnet
