#include "rpn/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace rpn {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::stringstream conv(item);
    T v;
    conv >> v;
    check_config(!conv.fail(), "bad list entry: " + item);
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check_config(eq != std::string::npos, "config line missing '=': " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_key_value_file(
    const std::string& path) {
  std::ifstream f(path);
  check_config(f.good(), "cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str());
}

void save_params(const std::string& path, const ParamStore& store) {
  std::ofstream f(path, std::ios::binary);
  check_config(f.good(), "cannot write checkpoint: " + path);
  f.write("RPNP", 4);
  const uint32_t count = static_cast<uint32_t>(store.items().size());
  f.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& p : store.items()) {
    const uint16_t name_len = static_cast<uint16_t>(p->name.size());
    f.write(reinterpret_cast<const char*>(&name_len), 2);
    f.write(p->name.data(), name_len);
    const uint8_t rank = static_cast<uint8_t>(p->value.rank());
    f.write(reinterpret_cast<const char*>(&rank), 1);
    for (int i = 0; i < rank; ++i) {
      const int32_t d = p->value.dim(i);
      f.write(reinterpret_cast<const char*>(&d), 4);
    }
    f.write(reinterpret_cast<const char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(Real)));
  }
  check_config(f.good(), "checkpoint write failed: " + path);
}

std::map<std::string, TensorR> read_params_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check_format(f.good(), "cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  check_format(f.gcount() == 4 && std::memcmp(magic, "RPNP", 4) == 0,
               "bad checkpoint magic");
  uint32_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 4);
  check_format(f.good(), "truncated checkpoint header");
  std::map<std::string, TensorR> out;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t name_len = 0;
    f.read(reinterpret_cast<char*>(&name_len), 2);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    uint8_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), 1);
    check_format(f.good() && rank <= 8, "corrupt checkpoint entry");
    Shape shape(rank);
    for (int d = 0; d < rank; ++d) {
      int32_t v = 0;
      f.read(reinterpret_cast<char*>(&v), 4);
      check_format(f.good() && v > 0 && v < (1 << 20),
                   "corrupt checkpoint dims");
      shape[static_cast<size_t>(d)] = v;
    }
    TensorR t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(Real)));
    check_format(f.gcount() ==
                     static_cast<std::streamsize>(t.size() * sizeof(Real)),
                 "truncated checkpoint payload");
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

void load_params(const std::string& path, ParamStore& store) {
  auto raw = read_params_raw(path);
  for (const auto& p : store.items()) {
    auto it = raw.find(p->name);
    check_format(it != raw.end(), "checkpoint missing parameter: " + p->name);
    check_format(it->second.shape() == p->value.shape(),
                 "checkpoint shape mismatch for " + p->name);
    p->value = it->second;
  }
  check_format(raw.size() == store.items().size(),
               "checkpoint holds extra parameters");
}

std::string pyramid_config_to_text(const PyramidConfig& cfg, uint64_t seed) {
  std::ostringstream os;
  os << "mode = "
     << (cfg.mode == ScalabilityMode::kSpatial ? "spatial" : "quality") << "\n";
  os << "levels = " << cfg.levels << "\n";
  os << "channels = ";
  for (int i = 0; i < cfg.levels; ++i)
    os << (i ? "," : "") << cfg.channels[static_cast<size_t>(i)];
  os << "\nlambdas = ";
  for (int i = 0; i < cfg.levels; ++i)
    os << (i ? "," : "") << cfg.lambdas[static_cast<size_t>(i)];
  os << "\ncrcm_iterations = " << cfg.crcm_iterations << "\n";
  os << "mask_temperature = " << cfg.mask_temperature << "\n";
  os << "gca_reduction = " << cfg.gca_reduction << "\n";
  os << "st_warmup_steps = " << cfg.st_warmup_steps << "\n";
  os << "seed = " << seed << "\n";
  return os.str();
}

std::pair<PyramidConfig, uint64_t> pyramid_config_from_kv(
    const std::map<std::string, std::string>& kv) {
  PyramidConfig cfg;
  uint64_t seed = 1;
  auto get = [&kv](const std::string& k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("mode")) {
    if (*v == "spatial")
      cfg.mode = ScalabilityMode::kSpatial;
    else if (*v == "quality")
      cfg.mode = ScalabilityMode::kQuality;
    else
      throw ConfigError("mode must be spatial or quality, got: " + *v);
  }
  cfg = cfg.mode == ScalabilityMode::kSpatial ? PyramidConfig::spatial_default()
                                              : PyramidConfig::quality_default();
  if (auto* v = get("levels")) cfg.levels = std::stoi(*v);
  if (auto* v = get("channels")) cfg.channels = parse_list<int>(*v);
  if (auto* v = get("lambdas")) cfg.lambdas = parse_list<Real>(*v);
  // Reshape defaults when only the level count changed.
  if (static_cast<int>(cfg.channels.size()) != cfg.levels &&
      !get("channels")) {
    cfg.channels.assign(static_cast<size_t>(cfg.levels),
                        cfg.channels.empty() ? 16 : cfg.channels[0]);
  }
  if (static_cast<int>(cfg.lambdas.size()) != cfg.levels && !get("lambdas")) {
    // Spatial trade-offs grow with resolution; quality trade-offs shrink so
    // later levels spend more bits and quality climbs across levels.
    cfg.lambdas.resize(static_cast<size_t>(cfg.levels));
    const bool spatial = cfg.mode == ScalabilityMode::kSpatial;
    Real l = spatial ? 0.0067 : 0.04;
    for (int i = 0; i < cfg.levels; ++i, l *= spatial ? 2.0 : 0.5)
      cfg.lambdas[static_cast<size_t>(i)] = l;
  }
  if (auto* v = get("crcm_iterations")) cfg.crcm_iterations = std::stoi(*v);
  if (auto* v = get("mask_temperature")) cfg.mask_temperature = std::stod(*v);
  if (auto* v = get("gca_reduction")) cfg.gca_reduction = std::stoi(*v);
  if (auto* v = get("st_warmup_steps")) cfg.st_warmup_steps = std::stoi(*v);
  if (auto* v = get("seed")) seed = std::stoull(*v);
  cfg.validate();
  return {cfg, seed};
}

void save_model(const std::string& dir, const Model& model) {
  std::filesystem::create_directories(dir);
  save_params(dir + "/params.bin", model.params);
  std::ofstream f(dir + "/config.txt");
  check_config(f.good(), "cannot write model config: " + dir);
  f << pyramid_config_to_text(model.cfg, model.seed);
}

std::unique_ptr<Model> load_model(const std::string& dir) {
  check_config(std::filesystem::exists(dir + "/params.bin"),
               "missing checkpoint: " + dir + "/params.bin");
  auto kv = read_key_value_file(dir + "/config.txt");
  auto [cfg, seed] = pyramid_config_from_kv(kv);
  auto model = make_model(cfg, seed);
  load_params(dir + "/params.bin", model->params);
  return model;
}

}  // namespace rpn
