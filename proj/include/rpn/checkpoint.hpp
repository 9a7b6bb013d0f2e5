#pragma once

#include <map>
#include <string>

#include "rpn/pyramid.hpp"

namespace rpn {

// Simple "key = value" text with '#' comments; later keys win.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::string& path);

void save_params(const std::string& path, const ParamStore& store);
void load_params(const std::string& path, ParamStore& store);
// Name -> tensor, without needing a model; used for parameter counting.
std::map<std::string, TensorR> read_params_raw(const std::string& path);

std::string pyramid_config_to_text(const PyramidConfig& cfg, uint64_t seed);
std::pair<PyramidConfig, uint64_t> pyramid_config_from_kv(
    const std::map<std::string, std::string>& kv);

// Checkpoint directory: params.bin + config.txt.
void save_model(const std::string& dir, const Model& model);
std::unique_ptr<Model> load_model(const std::string& dir);

}  // namespace rpn
