#include "xpose/config.hpp"

#include <charconv>
#include <cstdlib>
#include <set>

#include <json.hpp>

#include "xpose/binary_io.hpp"
#include "xpose/errors.hpp"

namespace xpose {

using json = nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& ptr,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("'" + ptr + "': expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + ptr + "/" + it.key() + "'");
}

template <typename T>
T get_num(const json& obj, const std::string& ptr, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj[key];
  if (!v.is_number())
    throw ConfigError("'" + ptr + "/" + key + "': expected a number");
  return v.get<T>();
}

std::string get_str(const json& obj, const std::string& ptr, const char* key,
                    const std::string& fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) throw ConfigError("missing key '" + ptr + "/" + key + "'");
    return fallback;
  }
  if (!obj[key].is_string())
    throw ConfigError("'" + ptr + "/" + key + "': expected a string");
  return obj[key].get<std::string>();
}

DatasetConfig parse_dataset(const json& j, const std::string& ptr) {
  check_keys(j, ptr, {"kind", "path", "size", "classes", "train_count", "test_count", "seed"});
  DatasetConfig d;
  d.kind = get_str(j, ptr, "kind", d.kind);
  if (d.kind != "synthetic" && d.kind != "cifar10-bin")
    throw ConfigError("'" + ptr + "/kind': want synthetic or cifar10-bin");
  d.path = get_str(j, ptr, "path", d.path);
  if (d.kind == "cifar10-bin" && d.path.empty())
    throw ConfigError("'" + ptr + "/path': required for cifar10-bin");
  d.size = get_num(j, ptr, "size", d.size);
  d.classes = get_num(j, ptr, "classes", d.classes);
  d.train_count = get_num(j, ptr, "train_count", d.train_count);
  d.test_count = get_num(j, ptr, "test_count", d.test_count);
  d.seed = get_num(j, ptr, "seed", d.seed);
  if (d.kind == "cifar10-bin" && (d.size != 32 || d.classes != 10))
    throw ConfigError("'" + ptr + "': cifar10-bin is 32x32 with 10 classes");
  if (d.size < 16) throw ConfigError("'" + ptr + "/size': must be >= 16");
  return d;
}

ZooConfig parse_zoo(const json& j, const std::string& ptr) {
  check_keys(j, ptr, {"epochs", "batch_size", "learning_rate", "momentum", "seed", "models"});
  ZooConfig z;
  z.train.epochs = get_num(j, ptr, "epochs", z.train.epochs);
  z.train.batch_size = get_num(j, ptr, "batch_size", z.train.batch_size);
  z.train.learning_rate = get_num(j, ptr, "learning_rate", z.train.learning_rate);
  z.train.momentum = get_num(j, ptr, "momentum", z.train.momentum);
  z.train.seed = get_num(j, ptr, "seed", z.train.seed);
  z.train.validate();
  if (j.contains("models")) {
    if (!j["models"].is_array()) throw ConfigError("'" + ptr + "/models': expected an array");
    int i = 0;
    for (const json& mj : j["models"]) {
      std::string mptr = ptr + "/models/" + std::to_string(i++);
      check_keys(mj, mptr, {"name", "arch", "adv_train"});
      ZooModelConfig mc;
      mc.name = get_str(mj, mptr, "name", "", true);
      mc.arch = get_str(mj, mptr, "arch", "", true);
      if (mj.contains("adv_train")) {
        check_keys(mj["adv_train"], mptr + "/adv_train", {"epsilon", "steps"});
        TrainConfig::AdvTrain adv;
        adv.epsilon = get_num(mj["adv_train"], mptr + "/adv_train", "epsilon", adv.epsilon);
        adv.steps = get_num(mj["adv_train"], mptr + "/adv_train", "steps", adv.steps);
        if (adv.epsilon <= 0.0f || adv.steps <= 0)
          throw ConfigError("'" + mptr + "/adv_train': epsilon/steps must be positive");
        mc.adv_train = adv;
      }
      z.models.push_back(std::move(mc));
    }
  } else {
    for (const char* arch : {"plain", "wide", "residual", "deepnarrow"})
      z.models.push_back({arch, arch, std::nullopt});
  }
  std::set<std::string> names;
  for (const auto& m : z.models)
    if (!names.insert(m.name).second)
      throw ConfigError("'" + ptr + "/models': duplicate model name '" + m.name + "'");
  return z;
}

NamedAttack parse_attack(const json& j, const std::string& ptr) {
  check_keys(j, ptr,
             {"name", "variant", "epsilon", "iters", "step", "momentum", "dim_prob",
              "tim_kernel", "sim_copies", "pgn_samples", "pgn_delta", "pgn_zeta",
              "gi_pre_iters", "gi_factor", "seed"});
  NamedAttack a;
  a.name = get_str(j, ptr, "name", "", true);
  a.cfg.variant = attack_variant_from(get_str(j, ptr, "variant", "mifgsm"));
  a.cfg.epsilon = get_num(j, ptr, "epsilon", a.cfg.epsilon);
  a.cfg.iters = get_num(j, ptr, "iters", a.cfg.iters);
  a.cfg.step = get_num(j, ptr, "step", a.cfg.step);
  a.cfg.momentum = get_num(j, ptr, "momentum", a.cfg.momentum);
  a.cfg.dim_prob = get_num(j, ptr, "dim_prob", a.cfg.dim_prob);
  a.cfg.tim_kernel = get_num(j, ptr, "tim_kernel", a.cfg.tim_kernel);
  a.cfg.sim_copies = get_num(j, ptr, "sim_copies", a.cfg.sim_copies);
  a.cfg.pgn_samples = get_num(j, ptr, "pgn_samples", a.cfg.pgn_samples);
  a.cfg.pgn_delta = get_num(j, ptr, "pgn_delta", a.cfg.pgn_delta);
  a.cfg.pgn_zeta = get_num(j, ptr, "pgn_zeta", a.cfg.pgn_zeta);
  a.cfg.gi_pre_iters = get_num(j, ptr, "gi_pre_iters", a.cfg.gi_pre_iters);
  a.cfg.gi_factor = get_num(j, ptr, "gi_factor", a.cfg.gi_factor);
  a.cfg.seed = get_num(j, ptr, "seed", a.cfg.seed);
  try {
    a.cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError("'" + ptr + "': " + e.what());
  }
  return a;
}

ProtocolConfig parse_protocol(const json& j, const std::string& ptr, const RunConfig& cfg) {
  check_keys(j, ptr,
             {"kind", "transform", "whitebox", "ensemble", "attack", "stride", "blackbox",
              "layer", "k", "angle"});
  ProtocolConfig p;
  p.kind = get_str(j, ptr, "kind", "", true);
  static const std::set<std::string> kinds{"clean", "single", "ensemble", "sweep", "featdiff"};
  if (!kinds.count(p.kind))
    throw ConfigError("'" + ptr + "/kind': unknown protocol '" + p.kind + "'");
  if (j.contains("transform")) {
    try {
      p.transform = TransformSpec::parse(get_str(j, ptr, "transform", "identity"));
    } catch (const ConfigError& e) {
      throw ConfigError("'" + ptr + "/transform': " + e.what());
    }
  }
  p.whitebox = get_str(j, ptr, "whitebox", "");
  if (j.contains("ensemble")) {
    if (!j["ensemble"].is_array())
      throw ConfigError("'" + ptr + "/ensemble': expected an array of model names");
    for (const json& e : j["ensemble"]) {
      if (!e.is_string()) throw ConfigError("'" + ptr + "/ensemble': expected strings");
      p.ensemble.push_back(e.get<std::string>());
    }
  }
  p.attack = get_str(j, ptr, "attack", "");
  p.stride = get_num(j, ptr, "stride", p.stride);
  p.blackbox = get_str(j, ptr, "blackbox", "");
  p.layer = get_str(j, ptr, "layer", "");
  p.k = get_num(j, ptr, "k", p.k);
  p.angle = get_num(j, ptr, "angle", p.angle);

  auto need_model = [&](const std::string& name, const char* key) {
    if (name.empty()) throw ConfigError("missing key '" + ptr + "/" + key + "'");
    for (const auto& m : cfg.zoo.models)
      if (m.name == name) return;
    throw ConfigError("'" + ptr + "/" + key + "': unknown model '" + name + "'");
  };
  auto need_attack = [&]() {
    if (p.attack.empty()) throw ConfigError("missing key '" + ptr + "/attack'");
    for (const auto& a : cfg.attacks)
      if (a.name == p.attack) return;
    throw ConfigError("'" + ptr + "/attack': unknown attack '" + p.attack + "'");
  };
  if (p.kind == "single") {
    need_model(p.whitebox, "whitebox");
    need_attack();
  } else if (p.kind == "ensemble") {
    if (p.ensemble.empty()) throw ConfigError("missing key '" + ptr + "/ensemble'");
    for (const auto& m : p.ensemble) need_model(m, "ensemble");
    need_attack();
  } else if (p.kind == "sweep") {
    need_model(p.whitebox, "whitebox");
    need_attack();
    if (p.stride <= 0 || 360 % p.stride != 0)
      throw ConfigError("'" + ptr + "/stride': must divide 360");
  } else if (p.kind == "featdiff") {
    need_model(p.whitebox, "whitebox");
    need_model(p.blackbox, "blackbox");
    need_attack();
    if (p.layer.empty()) throw ConfigError("missing key '" + ptr + "/layer'");
    if (p.k < 1) throw ConfigError("'" + ptr + "/k': must be >= 1");
    if (!(p.angle > 0.0f) || p.angle >= 360.0f)
      throw ConfigError("'" + ptr + "/angle': must be in (0,360)");
  }
  return p;
}

}  // namespace

const NamedAttack& RunConfig::find_attack(const std::string& name) const {
  for (const auto& a : attacks)
    if (a.name == name) return a;
  throw ConfigError("unknown attack '" + name + "'");
}

const ZooModelConfig& RunConfig::find_model(const std::string& name) const {
  for (const auto& m : zoo.models)
    if (m.name == name) return m;
  throw ConfigError("unknown model '" + name + "'");
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "", {"dataset", "zoo", "attacks", "protocols", "output_dir"});
  RunConfig cfg;
  if (j.contains("dataset")) cfg.dataset = parse_dataset(j["dataset"], "/dataset");
  if (j.contains("zoo")) cfg.zoo = parse_zoo(j["zoo"], "/zoo");
  else cfg.zoo = parse_zoo(json::object(), "/zoo");
  if (j.contains("attacks")) {
    if (!j["attacks"].is_array()) throw ConfigError("'/attacks': expected an array");
    int i = 0;
    for (const json& aj : j["attacks"])
      cfg.attacks.push_back(parse_attack(aj, "/attacks/" + std::to_string(i++)));
    std::set<std::string> names;
    for (const auto& a : cfg.attacks)
      if (!names.insert(a.name).second)
        throw ConfigError("'/attacks': duplicate attack name '" + a.name + "'");
  }
  cfg.output_dir = get_str(j, "", "output_dir", cfg.output_dir);
  if (j.contains("protocols")) {
    if (!j["protocols"].is_array()) throw ConfigError("'/protocols': expected an array");
    int i = 0;
    for (const json& pj : j["protocols"])
      cfg.protocols.push_back(parse_protocol(pj, "/protocols/" + std::to_string(i++), cfg));
  }
  const char* env = std::getenv("XPOSE_SEED");
  if (env && *env) {
    uint64_t master = 0;
    auto [p, ec] = std::from_chars(env, env + std::char_traits<char>::length(env), master);
    if (ec != std::errc{} || *p != '\0')
      throw ConfigError(std::string("XPOSE_SEED is not an unsigned integer: ") + env);
    override_seeds(cfg, master);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file(path));
}

void override_seeds(RunConfig& cfg, uint64_t master_seed) {
  cfg.dataset.seed = master_seed;
  cfg.zoo.train.seed = master_seed + 1;
  for (size_t i = 0; i < cfg.attacks.size(); ++i)
    cfg.attacks[i].cfg.seed = master_seed + 100 + i;
}

}  // namespace xpose
