#pragma once

#include <map>
#include <string>
#include <vector>

#include "psc/nn.hpp"

namespace psc {

struct CheckpointMeta {
  uint64_t seed = 0;
  std::string config_hash;
  int64_t step = 0;
  std::map<std::string, std::string> extra;
};

// JSON manifest (names, shapes, dtype, seed, config hash) plus one raw
// little-endian float32 blob per tensor in a sibling directory. Optimizer
// moments ride along under m./v. prefixes so training can resume exactly.
void save_checkpoint(const std::string& dir, std::vector<nn::ParamRef<float>> params, const nn::Adam<float>* opt,
                     const CheckpointMeta& meta);

CheckpointMeta load_checkpoint(const std::string& dir, std::vector<nn::ParamRef<float>> params,
                               nn::Adam<float>* opt);

}  // namespace psc
