#include "psc/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace psc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string blob_name(const std::string& tensor_name) {
  std::string s = tensor_name;
  for (char& c : s)
    if (c == '.' || c == '/') c = '_';
  return s + ".bin";
}

void write_blob(const fs::path& path, const Tensor<float>& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

void read_blob(const fs::path& path, Tensor<float>& t) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot read " + path.string());
  f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float)))
    throw std::runtime_error("checkpoint: short blob " + path.string());
}

}  // namespace

void save_checkpoint(const std::string& dir, std::vector<nn::ParamRef<float>> params, const nn::Adam<float>* opt,
                     const CheckpointMeta& meta) {
  const fs::path root(dir);
  const fs::path tdir = root / "tensors";
  fs::create_directories(tdir);

  json j;
  j["format_version"] = 1;
  j["dtype"] = "float32";
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["step"] = meta.step;
  for (const auto& [k, v] : meta.extra) j["extra"][k] = v;
  j["tensors"] = json::array();

  auto add_tensor = [&](const std::string& name, const Tensor<float>& t) {
    j["tensors"].push_back(json{{"name", name}, {"shape", t.shape}, {"file", "tensors/" + blob_name(name)}});
    write_blob(tdir / blob_name(name), t);
  };

  for (const auto& p : params) add_tensor(p.name, *p.value);
  if (opt) {
    j["adam"] = json{{"step", opt->step_count}, {"lr", opt->lr},       {"beta1", opt->beta1},
                     {"beta2", opt->beta2},     {"eps", opt->eps},     {"weight_decay", opt->weight_decay}};
    for (size_t i = 0; i < params.size(); ++i) {
      add_tensor("adam_m." + params[i].name, opt->m[i]);
      add_tensor("adam_v." + params[i].name, opt->v[i]);
    }
  }
  std::ofstream f(root / "manifest.json");
  if (!f) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
  f << j.dump(2) << "\n";
}

CheckpointMeta load_checkpoint(const std::string& dir, std::vector<nn::ParamRef<float>> params,
                               nn::Adam<float>* opt) {
  const fs::path root(dir);
  std::ifstream f(root / "manifest.json");
  if (!f) throw std::runtime_error("checkpoint: missing manifest in " + dir);
  json j;
  f >> j;

  std::map<std::string, json> index;
  for (const auto& jt : j.at("tensors")) index[jt.at("name").get<std::string>()] = jt;

  auto load_tensor = [&](const std::string& name, Tensor<float>& t) {
    auto it = index.find(name);
    if (it == index.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
    const auto shape = it->second.at("shape").get<std::vector<int>>();
    if (shape != t.shape) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    read_blob(root / it->second.at("file").get<std::string>(), t);
  };

  for (auto& p : params) load_tensor(p.name, *p.value);
  if (opt) {
    if (!j.contains("adam")) throw std::runtime_error("checkpoint: no optimizer state in " + dir);
    opt->step_count = j["adam"].at("step").get<int64_t>();
    opt->lr = j["adam"].at("lr").get<double>();
    opt->beta1 = j["adam"].at("beta1").get<double>();
    opt->beta2 = j["adam"].at("beta2").get<double>();
    opt->eps = j["adam"].at("eps").get<double>();
    opt->weight_decay = j["adam"].at("weight_decay").get<double>();
    for (size_t i = 0; i < params.size(); ++i) {
      load_tensor("adam_m." + params[i].name, opt->m[i]);
      load_tensor("adam_v." + params[i].name, opt->v[i]);
    }
  }

  CheckpointMeta meta;
  meta.seed = j.at("seed").get<uint64_t>();
  meta.config_hash = j.value("config_hash", "");
  meta.step = j.value("step", int64_t{0});
  if (j.contains("extra"))
    for (auto it = j["extra"].begin(); it != j["extra"].end(); ++it) meta.extra[it.key()] = it.value().get<std::string>();
  return meta;
}

}  // namespace psc
