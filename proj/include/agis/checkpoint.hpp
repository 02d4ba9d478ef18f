#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agis/generator.hpp"
#include "agis/nn.hpp"

namespace agis {

/// Versioned binary container: magic, version, JSON header (tensor names and
/// shapes plus arbitrary metadata such as the generator spec), then the raw
/// little-endian doubles of every tensor in header order.
struct CheckpointData {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
CheckpointData load_checkpoint(const std::string& path);

nlohmann::json spec_to_json(const GeneratorSpec& spec);
GeneratorSpec spec_from_json(const nlohmann::json& j);

/// Copy checkpoint tensors into an existing parameter list, matched by name.
/// Throws on missing names or shape mismatches.
void assign_params(ParamList& params, const CheckpointData& ckpt);

}  // namespace agis
