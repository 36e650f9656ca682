#include "tempnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "tempnet/byte_io.hpp"

namespace tempnet {

std::size_t TempNetConfig::attention_bottleneck() const {
  const std::size_t r = attention_reduction == 0 ? 1 : attention_reduction;
  return std::max<std::size_t>(1, input_shape[0] / r);
}

void TempNetConfig::validate() const {
  static const char* names[] = {"T", "H", "W", "C"};
  for (std::size_t a = 0; a < 4; ++a) {
    if (input_shape[a] == 0) throw ValueError(std::string("input extent ") + names[a] + " must be >= 1");
  }
  if (channels == 0) throw ValueError("channels must be >= 1");
  if (attention_reduction == 0) throw ValueError("attention_reduction must be >= 1");
  for (const auto* pool : {&spatial_pool, &temporal_pool, &bridge_pool}) {
    for (std::size_t e : *pool) {
      if (e == 0) throw ValueError("pooling window extents must be >= 1");
    }
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0)) throw ValueError("learning_rate must be >= 0");
  if (batch_size == 0) throw ValueError("batch_size must be >= 1");
  if (epochs == 0) throw ValueError("epochs must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw ValueError("momentum must be in [0,1)");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ValueError("adam betas must be in [0,1)");
  }
  if (!(adam_epsilon > 0)) throw ValueError("adam_epsilon must be positive");
  if (!(threshold > 0 && threshold < 1)) throw ValueError("threshold must be in (0,1)");
  if (!(stop_at_val_accuracy >= 0 && stop_at_val_accuracy <= 1)) throw ValueError("stop_at_val_accuracy must be in [0,1]");
}

void RunConfig::sync_input_shape() { net.input_shape = {frames, preproc.height, preproc.width, preproc.output_channels()}; }

void RunConfig::validate() const {
  if (frames == 0) throw ValueError("frames must be >= 1");
  net.validate();
  preproc.validate();
  train.validate();
  if (net.input_shape != std::array<std::size_t, 4>{frames, preproc.height, preproc.width, preproc.output_channels()}) {
    throw ValueError("network input shape is out of sync with frames/height/width/use_wavelet");
  }
}

const char* optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd-momentum"; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValueError("expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValueError("expected a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValueError("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ValueError("expected true or false, got '" + v + "'");
}

Window3 parse_window(const std::string& v) {
  Window3 w{};
  std::size_t start = 0;
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t end = a < 2 ? v.find('x', start) : v.size();
    if (end == std::string::npos) throw ValueError("expected a window like 1x2x2, got '" + v + "'");
    w[a] = parse_size(v.substr(start, end - start));
    start = end + 1;
  }
  return w;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt_window(const Window3& w) {
  return std::to_string(w[0]) + "x" + std::to_string(w[1]) + "x" + std::to_string(w[2]);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"frames", [](RunConfig& c, const std::string& v) { c.frames = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.frames); }},
      {"height", [](RunConfig& c, const std::string& v) { c.preproc.height = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.preproc.height); }},
      {"width", [](RunConfig& c, const std::string& v) { c.preproc.width = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.preproc.width); }},
      {"channels", [](RunConfig& c, const std::string& v) { c.net.channels = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.net.channels); }},
      {"spatial_blocks", [](RunConfig& c, const std::string& v) { c.net.spatial_blocks = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.net.spatial_blocks); }},
      {"temporal_blocks", [](RunConfig& c, const std::string& v) { c.net.temporal_blocks = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.net.temporal_blocks); }},
      {"attention", [](RunConfig& c, const std::string& v) { c.net.attention_enabled = parse_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.net.attention_enabled); }},
      {"attention_reduction", [](RunConfig& c, const std::string& v) { c.net.attention_reduction = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.net.attention_reduction); }},
      {"spatial_pool", [](RunConfig& c, const std::string& v) { c.net.spatial_pool = parse_window(v); },
       [](const RunConfig& c) { return fmt_window(c.net.spatial_pool); }},
      {"temporal_pool", [](RunConfig& c, const std::string& v) { c.net.temporal_pool = parse_window(v); },
       [](const RunConfig& c) { return fmt_window(c.net.temporal_pool); }},
      {"bridge_pool", [](RunConfig& c, const std::string& v) { c.net.bridge_pool = parse_window(v); },
       [](const RunConfig& c) { return fmt_window(c.net.bridge_pool); }},
      {"source_fps", [](RunConfig& c, const std::string& v) { c.preproc.source_fps = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.preproc.source_fps); }},
      {"target_fps", [](RunConfig& c, const std::string& v) { c.preproc.target_fps = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.preproc.target_fps); }},
      {"use_wavelet", [](RunConfig& c, const std::string& v) { c.preproc.use_wavelet = parse_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.preproc.use_wavelet); }},
      {"difference_frames", [](RunConfig& c, const std::string& v) { c.preproc.difference_frames = parse_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.preproc.difference_frames); }},
      {"optimizer",
       [](RunConfig& c, const std::string& v) {
         if (v == "adam") {
           c.train.optimizer = OptimizerKind::Adam;
         } else if (v == "sgd-momentum") {
           c.train.optimizer = OptimizerKind::SgdMomentum;
         } else {
           throw ValueError("optimizer must be adam or sgd-momentum, got '" + v + "'");
         }
       },
       [](const RunConfig& c) { return std::string(optimizer_name(c.train.optimizer)); }},
      {"learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.learning_rate); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"patience", [](RunConfig& c, const std::string& v) { c.train.patience = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.train.patience); }},
      {"momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.momentum); }},
      {"adam_beta1", [](RunConfig& c, const std::string& v) { c.train.adam_beta1 = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam_beta1); }},
      {"adam_beta2", [](RunConfig& c, const std::string& v) { c.train.adam_beta2 = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam_beta2); }},
      {"adam_epsilon", [](RunConfig& c, const std::string& v) { c.train.adam_epsilon = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam_epsilon); }},
      {"threshold", [](RunConfig& c, const std::string& v) { c.train.threshold = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.threshold); }},
      {"stop_at_val_accuracy", [](RunConfig& c, const std::string& v) { c.train.stop_at_val_accuracy = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.stop_at_val_accuracy); }},
  };
  return f;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key.emplace(f.key, &f);
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) throw FormatError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw FormatError(where + ": key '" + key + "' given twice");
    try {
      it->second->set(cfg, value);
    } catch (const ValueError& e) {
      throw FormatError(where + " (" + key + "): " + e.what());
    }
  }
  cfg.sync_input_shape();
  try {
    cfg.validate();
  } catch (const ValueError& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path.string());
  const auto bytes = io::read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += '=';
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace tempnet
