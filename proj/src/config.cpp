#include "psc/config.hpp"

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "psc/hash.hpp"

namespace psc {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(trim(tok)));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

class KvReader {
 public:
  explicit KvReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  std::string str(const std::string& key, const std::string& dflt) { return take(key).value_or(dflt); }
  int integer(const std::string& key, int dflt) {
    auto v = take(key);
    return v ? std::stoi(*v) : dflt;
  }
  uint64_t u64(const std::string& key, uint64_t dflt) {
    auto v = take(key);
    return v ? std::stoull(*v) : dflt;
  }
  double real(const std::string& key, double dflt) {
    auto v = take(key);
    return v ? std::stod(*v) : dflt;
  }
  bool boolean(const std::string& key, bool dflt) {
    auto v = take(key);
    if (!v) return dflt;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": " + *v);
  }
  std::vector<int> int_list(const std::string& key, const std::vector<int>& dflt) {
    auto v = take(key);
    return v ? parse_int_list(*v) : dflt;
  }

  void reject_unknown() const {
    if (kv_.empty()) return;
    std::string keys;
    for (const auto& [k, _] : kv_) keys += (keys.empty() ? "" : ", ") + k;
    throw std::invalid_argument("config: unknown keys: " + keys);
  }

 private:
  std::optional<std::string> take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    std::string v = it->second;
    kv_.erase(it);
    return v;
  }
  std::map<std::string, std::string> kv_;
};

}  // namespace

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  KvReader r(kv);
  RunConfig c;
  c.dataset = r.str("dataset", "");
  c.out_dir = r.str("out_dir", "");
  c.seed = r.u64("seed", 17);
  c.backend = r.str("backend", "oracle");
  c.embedder = r.str("embedder", "toy");
  c.embed_dim = r.integer("embed_dim", 64);

  c.data_categories = r.integer("data.categories", 40);
  c.data_sizes.train = r.integer("data.train", 400);
  c.data_sizes.val = r.integer("data.val", 100);
  c.data_sizes.test = r.integer("data.test", 100);
  c.scene.img_w = r.integer("data.img_w", 256);
  c.scene.img_h = r.integer("data.img_h", 256);
  c.scene.count_min = r.integer("data.count_min", 8);
  c.scene.count_max = r.integer("data.count_max", 60);
  c.scene.distractors_max = r.integer("data.distractors_max", 20);
  c.scene.max_overlap = r.real("data.max_overlap", 0.30);

  c.model.channels = r.int_list("model.channels", {6, 10, 14});
  c.model.kernels = r.int_list("model.kernels", {3, 3, 3});
  c.model.strides = r.int_list("model.strides", {2, 2, 1});
  c.model.head_hidden = r.integer("model.head_hidden", 8);
  c.region_hidden = r.integer("model.region_hidden", 96);

  c.train.steps = r.integer("train.steps", 2000);
  c.train.batch = r.integer("train.batch", 8);
  c.train.lr = r.real("train.lr", 1e-3);
  c.train.beta1 = r.real("train.beta1", 0.9);
  c.train.beta2 = r.real("train.beta2", 0.99);
  c.train.weight_decay = r.real("train.weight_decay", 1e-5);
  c.train.point_weight = r.real("train.point_weight", 1.0);
  c.train.cls_weight = r.real("train.cls_weight", 1.0);
  c.train.kd_weight = r.real("train.kd_weight", 1.0);
  c.train.proposals_per_scene = r.integer("train.proposals", 256);
  c.train.groups_per_scene = r.integer("train.groups", 16);
  c.train.positive_fraction = r.real("train.positive_fraction", 0.25);
  c.train.pool_grid_n = r.integer("train.pool_grid_n", 16);
  c.train.target_grid_n = r.integer("train.target_grid_n", 32);
  c.train.log_every = r.integer("train.log_every", 50);
  c.train.stage = r.str("train.stage", "joint");

  c.pipe.k_max = r.integer("pipe.k_max", 1000);
  c.pipe.heatmap_tau = r.real("pipe.heatmap_tau", 0.05);
  c.pipe.nms_iou = r.real("pipe.nms_iou", 0.5);
  c.pipe.count_threshold = r.real("pipe.count_threshold", 0.5);
  c.count_threshold_zero = r.real("pipe.count_threshold_zero", 0.5);
  c.pipe.box_prompt_size = r.real("pipe.box_prompt_size", 16.0);
  c.pipe.logit_scale = r.real("pipe.logit_scale", kLogitScale);
  c.pipe.grid_n = r.integer("pipe.grid_n", 32);
  c.pipe.per_class_nms = r.boolean("pipe.per_class_nms", false);
  c.use_calibrated = r.boolean("pipe.use_calibrated", true);

  c.checkpoint = r.str("checkpoint", "");
  c.eval_mode = r.str("eval.mode", "few");
  c.eval_prompts = r.str("eval.prompts", "heatmap");
  c.eval_split = r.str("eval.split", "test");

  c.jobs = r.integer("jobs", 1);
  r.reject_unknown();

  if (c.model.channels.size() != c.model.kernels.size() || c.model.channels.size() != c.model.strides.size())
    throw std::invalid_argument("config: model.channels/kernels/strides must have equal length");
  return c;
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv;
  kv["dataset"] = dataset;
  kv["out_dir"] = out_dir;
  kv["seed"] = std::to_string(seed);
  kv["backend"] = backend;
  kv["embedder"] = embedder;
  kv["embed_dim"] = std::to_string(embed_dim);
  kv["data.categories"] = std::to_string(data_categories);
  kv["data.train"] = std::to_string(data_sizes.train);
  kv["data.val"] = std::to_string(data_sizes.val);
  kv["data.test"] = std::to_string(data_sizes.test);
  kv["data.img_w"] = std::to_string(scene.img_w);
  kv["data.img_h"] = std::to_string(scene.img_h);
  kv["data.count_min"] = std::to_string(scene.count_min);
  kv["data.count_max"] = std::to_string(scene.count_max);
  kv["data.distractors_max"] = std::to_string(scene.distractors_max);
  kv["data.max_overlap"] = fmt_double(scene.max_overlap);
  kv["model.channels"] = join_ints(model.channels);
  kv["model.kernels"] = join_ints(model.kernels);
  kv["model.strides"] = join_ints(model.strides);
  kv["model.head_hidden"] = std::to_string(model.head_hidden);
  kv["model.region_hidden"] = std::to_string(region_hidden);
  kv["train.steps"] = std::to_string(train.steps);
  kv["train.batch"] = std::to_string(train.batch);
  kv["train.lr"] = fmt_double(train.lr);
  kv["train.beta1"] = fmt_double(train.beta1);
  kv["train.beta2"] = fmt_double(train.beta2);
  kv["train.weight_decay"] = fmt_double(train.weight_decay);
  kv["train.point_weight"] = fmt_double(train.point_weight);
  kv["train.cls_weight"] = fmt_double(train.cls_weight);
  kv["train.kd_weight"] = fmt_double(train.kd_weight);
  kv["train.proposals"] = std::to_string(train.proposals_per_scene);
  kv["train.groups"] = std::to_string(train.groups_per_scene);
  kv["train.positive_fraction"] = fmt_double(train.positive_fraction);
  kv["train.pool_grid_n"] = std::to_string(train.pool_grid_n);
  kv["train.target_grid_n"] = std::to_string(train.target_grid_n);
  kv["train.log_every"] = std::to_string(train.log_every);
  kv["train.stage"] = train.stage;
  kv["pipe.k_max"] = std::to_string(pipe.k_max);
  kv["pipe.heatmap_tau"] = fmt_double(pipe.heatmap_tau);
  kv["pipe.nms_iou"] = fmt_double(pipe.nms_iou);
  kv["pipe.count_threshold"] = fmt_double(pipe.count_threshold);
  kv["pipe.count_threshold_zero"] = fmt_double(count_threshold_zero);
  kv["pipe.box_prompt_size"] = fmt_double(pipe.box_prompt_size);
  kv["pipe.logit_scale"] = fmt_double(pipe.logit_scale);
  kv["pipe.grid_n"] = std::to_string(pipe.grid_n);
  kv["pipe.per_class_nms"] = pipe.per_class_nms ? "true" : "false";
  kv["pipe.use_calibrated"] = use_calibrated ? "true" : "false";
  kv["checkpoint"] = checkpoint;
  kv["eval.mode"] = eval_mode;
  kv["eval.prompts"] = eval_prompts;
  kv["eval.split"] = eval_split;
  kv["jobs"] = std::to_string(jobs);
  return kv;
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::config_hash() const { return hash_hex(fnv1a64(serialize())); }

RunConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key = value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return RunConfig::from_map(kv);
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void apply_overrides(std::map<std::string, std::string>& kv, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("override must be key=value: " + ov);
    kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
}

}  // namespace psc
