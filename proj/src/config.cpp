#include "cyc/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>

#include "cyc/error.hpp"

extern char** environ;

namespace cyc {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& wanted) {
  throw Error(Error::Kind::config, "config key '" + key + "' expects " +
                                       wanted + ", got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || value.empty())
    bad_value(key, value, "an unsigned integer");
  return out;
}

double parse_f64(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last || value.empty())
    bad_value(key, value, "a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

std::vector<std::size_t> parse_size_list(const std::string& key,
                                         const std::string& value) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t comma = value.find(',', start);
    std::string item = trim(value.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (item.empty()) bad_value(key, value, "comma-separated integers");
    out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_f64(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string format_size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

// Single authority for key dispatch, shared by the file parser and the
// environment override path.
void set_key(RunConfig& rc, const std::string& key, const std::string& value) {
  if (key == "variant") {
    rc.variant = variant_from_string(value);
  } else if (key == "backbone") {
    backbone_preset(value);  // validates the name
    rc.backbone = value;
  } else if (key == "classes") {
    rc.classes = parse_u64(key, value);
  } else if (key == "channels") {
    rc.channels = parse_u64(key, value);
  } else if (key == "samples") {
    rc.samples = parse_u64(key, value);
  } else if (key == "windows") {
    rc.windows = parse_size_list(key, value);
  } else if (key == "stride") {
    rc.stride = parse_u64(key, value);
  } else if (key == "patch_dim") {
    rc.patch_dim = parse_u64(key, value);
  } else if (key == "hidden_dim") {
    rc.hidden_dim = parse_u64(key, value);
  } else if (key == "max_cycles") {
    rc.max_cycles = parse_u64(key, value);
  } else if (key == "rms_eps") {
    rc.rms_eps = parse_f64(key, value);
  } else if (key == "tau_ens") {
    rc.tau_ens = parse_f64(key, value);
  } else if (key == "tau_stop") {
    rc.tau_stop = parse_f64(key, value);
  } else if (key == "mcts_simulations") {
    rc.mcts_simulations = parse_u64(key, value);
  } else if (key == "mcts_ucb_c") {
    rc.mcts_ucb_c = parse_f64(key, value);
  } else if (key == "mcts_seed") {
    rc.mcts_seed = parse_u64(key, value);
  } else if (key == "lambda_halt") {
    rc.lambda_halt = parse_f64(key, value);
  } else if (key == "lambda_iue") {
    rc.lambda_iue = parse_f64(key, value);
  } else if (key == "iue_squared_error") {
    rc.iue_squared_error = parse_bool(key, value);
  } else if (key == "learning_rate") {
    rc.learning_rate = parse_f64(key, value);
  } else if (key == "adam_beta1") {
    rc.adam_beta1 = parse_f64(key, value);
  } else if (key == "adam_beta2") {
    rc.adam_beta2 = parse_f64(key, value);
  } else if (key == "adam_eps") {
    rc.adam_eps = parse_f64(key, value);
  } else if (key == "epochs") {
    rc.epochs = parse_u64(key, value);
  } else if (key == "batch_size") {
    rc.batch_size = parse_u64(key, value);
  } else if (key == "val_fraction") {
    rc.val_fraction = parse_f64(key, value);
  } else if (key == "seed") {
    rc.seed = parse_u64(key, value);
  } else if (key == "dataset") {
    rc.dataset = value;
  } else if (key == "out_dir") {
    rc.out_dir = value;
  } else {
    throw Error(Error::Kind::config, "unknown config key '" + key + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  backbone_preset(backbone);  // throws on unknown names
  if (classes < 2)
    throw Error(Error::Kind::config, "classes must be at least 2");
  if (windows.empty())
    throw Error(Error::Kind::config, "windows must list at least one size");
  for (std::size_t w : windows)
    if (w == 0)
      throw Error(Error::Kind::config, "window sizes must be positive");
  if (patch_dim == 0 || hidden_dim == 0)
    throw Error(Error::Kind::config,
                "patch_dim and hidden_dim must be positive");
  if (max_cycles == 0)
    throw Error(Error::Kind::config, "max_cycles must be at least 1");
  if (rms_eps < 0.0)
    throw Error(Error::Kind::config, "rms_eps must be non-negative");
  if (tau_ens < 0.0)
    throw Error(Error::Kind::config, "tau_ens must be non-negative");
  if (mcts_simulations == 0)
    throw Error(Error::Kind::config, "mcts_simulations must be at least 1");
  if (mcts_ucb_c <= 0.0)
    throw Error(Error::Kind::config, "mcts_ucb_c must be positive");
  if (lambda_halt < 0.0 || lambda_iue < 0.0)
    throw Error(Error::Kind::config, "loss weights must be non-negative");
  if (learning_rate <= 0.0)
    throw Error(Error::Kind::config, "learning_rate must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 ||
      adam_beta2 >= 1.0)
    throw Error(Error::Kind::config, "adam betas must lie in [0, 1)");
  if (adam_eps <= 0.0)
    throw Error(Error::Kind::config, "adam_eps must be positive");
  if (batch_size == 0)
    throw Error(Error::Kind::config, "batch_size must be at least 1");
  if (val_fraction < 0.0 || val_fraction >= 1.0)
    throw Error(Error::Kind::config, "val_fraction must lie in [0, 1)");
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "# model\n";
  out << "variant=" << to_string(variant) << "\n";
  out << "backbone=" << backbone << "\n";
  out << "classes=" << classes << "\n";
  out << "channels=" << channels << "\n";
  out << "samples=" << samples << "\n";
  out << "# hierarchical encoder\n";
  out << "windows=" << format_size_list(windows) << "\n";
  out << "stride=" << stride << "\n";
  out << "patch_dim=" << patch_dim << "\n";
  out << "hidden_dim=" << hidden_dim << "\n";
  out << "max_cycles=" << max_cycles << "\n";
  out << "rms_eps=" << format_f64(rms_eps) << "\n";
  out << "# reliability aggregation and halting\n";
  out << "tau_ens=" << format_f64(tau_ens) << "\n";
  out << "tau_stop=" << format_f64(tau_stop) << "\n";
  out << "mcts_simulations=" << mcts_simulations << "\n";
  out << "mcts_ucb_c=" << format_f64(mcts_ucb_c) << "\n";
  out << "mcts_seed=" << mcts_seed << "\n";
  out << "# loss\n";
  out << "lambda_halt=" << format_f64(lambda_halt) << "\n";
  out << "lambda_iue=" << format_f64(lambda_iue) << "\n";
  out << "iue_squared_error=" << (iue_squared_error ? "true" : "false")
      << "\n";
  out << "# optimizer and schedule\n";
  out << "learning_rate=" << format_f64(learning_rate) << "\n";
  out << "adam_beta1=" << format_f64(adam_beta1) << "\n";
  out << "adam_beta2=" << format_f64(adam_beta2) << "\n";
  out << "adam_eps=" << format_f64(adam_eps) << "\n";
  out << "epochs=" << epochs << "\n";
  out << "batch_size=" << batch_size << "\n";
  out << "val_fraction=" << format_f64(val_fraction) << "\n";
  out << "seed=" << seed << "\n";
  out << "# paths\n";
  out << "dataset=" << dataset << "\n";
  out << "out_dir=" << out_dir << "\n";
  return out.str();
}

DecoderConfig RunConfig::decoder_config() const {
  DecoderConfig dc;
  dc.backbone = backbone_preset(backbone);
  dc.mhsp.windows = windows;
  dc.mhsp.stride = stride;
  dc.mhsp.patch_dim = patch_dim;
  dc.mhsp.hidden_dim = hidden_dim;
  dc.mhsp.max_cycles = max_cycles;
  dc.mhsp.rms_eps = rms_eps;
  dc.variant = variant;
  dc.classes = classes;
  dc.tau_ens = tau_ens;
  dc.tau_stop = tau_stop;
  return dc;
}

LossWeights RunConfig::loss_weights() const {
  LossWeights lw;
  lw.lambda_halt = lambda_halt;
  lw.lambda_iue = lambda_iue;
  lw.iue_enabled = variant == Variant::mhsp_iue;
  lw.iue_squared_error = iue_squared_error;
  return lw;
}

FitConfig RunConfig::fit_config() const {
  FitConfig fc;
  fc.batch_size = batch_size;
  fc.adam.learning_rate = learning_rate;
  fc.adam.beta1 = adam_beta1;
  fc.adam.beta2 = adam_beta2;
  fc.adam.eps = adam_eps;
  fc.mcts.n_simulations = mcts_simulations;
  fc.mcts.max_depth = max_cycles;
  fc.mcts.ucb_c = mcts_ucb_c;
  fc.mcts.rng_seed = mcts_seed;
  fc.seed = seed;
  return fc;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Error::Kind::config,
                  "config line " + std::to_string(line_no) +
                      " is not a key=value pair: '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw Error(Error::Kind::config, "config line " +
                                           std::to_string(line_no) +
                                           " has an empty key");
    if (!seen.insert(key).second)
      throw Error(Error::Kind::config, "duplicate config key '" + key + "'");
    set_key(rc, key, value);
  }
  return rc;
}

void apply_env_overrides(RunConfig& rc) {
  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind("CYC_", 0) != 0) continue;
    std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(4, eq - 4);
    for (char& ch : key)
      ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::string value = entry.substr(eq + 1);
    set_key(rc, key, value);
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error(Error::Kind::data, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  RunConfig rc = parse_run_config(buf.str());
  apply_env_overrides(rc);
  return rc;
}

}  // namespace cyc
