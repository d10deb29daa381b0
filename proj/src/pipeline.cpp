#include "xpose/pipeline.hpp"

#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "xpose/bench.hpp"
#include "xpose/binary_io.hpp"
#include "xpose/errors.hpp"
#include "xpose/report.hpp"

namespace xpose {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join_plus(const std::vector<std::string>& parts) {
  std::string s;
  for (const auto& p : parts) s += (s.empty() ? "" : "+") + p;
  return s;
}

std::string dataset_sidecar_id(const RunConfig& cfg, const OutPaths& paths) {
  json j;
  try {
    j = json::parse(read_file(paths.dataset_json()));
  } catch (const json::exception&) {
    throw PrereqError("unreadable dataset sidecar '" + paths.dataset_json() + "'");
  }
  (void)cfg;
  return j.value("id", std::string());
}

ModelGraph load_model(const RunConfig& cfg, const OutPaths& paths, const std::string& name) {
  cfg.find_model(name);  // unknown names are config errors, not missing files
  const std::string path = paths.checkpoint(name);
  if (!file_exists(path))
    throw PrereqError("missing checkpoint '" + path + "' (run the train command first)");
  return load_checkpoint(path);
}

std::vector<ModelGraph> load_black_boxes(const RunConfig& cfg, const OutPaths& paths,
                                         const std::vector<std::string>& exclude) {
  std::vector<ModelGraph> out;
  for (const auto& mc : cfg.zoo.models) {
    bool skip = false;
    for (const auto& e : exclude) skip = skip || e == mc.name;
    if (!skip) out.push_back(load_model(cfg, paths, mc.name));
  }
  if (out.empty()) throw ConfigError("no black-box models remain after excluding white boxes");
  return out;
}

std::vector<const ModelGraph*> refs(const std::vector<ModelGraph>& models) {
  std::vector<const ModelGraph*> out;
  for (const auto& m : models) out.push_back(&m);
  return out;
}

}  // namespace

// ---- AE cache ----------------------------------------------------------------

void save_ae_cache(const std::string& path, const AeCache& cache) {
  json meta;
  meta["white_boxes"] = cache.white_boxes;
  meta["attack"] = cache.attack;
  meta["dataset"] = cache.dataset_id;
  meta["seed"] = cache.seed;
  const Shape s = cache.x_adv.shape();
  meta["shape"] = {{"b", s.b}, {"h", s.h}, {"w", s.w}, {"c", s.c}};
  meta["labels"] = cache.labels;
  std::string bytes("ATAE1", 5);
  const std::string meta_str = meta.dump();
  put_u32le(bytes, uint32_t(meta_str.size()));
  bytes += meta_str;
  put_f32le(bytes, cache.x_adv.data(), cache.x_adv.size());
  write_file_atomic(path, bytes);
}

AeCache load_ae_cache(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 5 || bytes.compare(0, 5, "ATAE1") != 0)
    throw BadMagicError("'" + path + "': bad magic (expected ATAE1)");
  if (bytes.size() < 9) throw TruncatedBlobError("'" + path + "': truncated metadata length");
  const uint32_t meta_len = get_u32le(bytes, 5);
  if (bytes.size() < 9 + size_t(meta_len))
    throw TruncatedBlobError("'" + path + "': truncated metadata");
  json meta;
  try {
    meta = json::parse(bytes.substr(9, meta_len));
  } catch (const json::exception& e) {
    throw ArchMismatchError("'" + path + "': unparseable metadata: " + e.what());
  }
  AeCache cache;
  try {
    cache.white_boxes = meta.at("white_boxes").get<std::vector<std::string>>();
    cache.attack = meta.at("attack").get<std::string>();
    cache.dataset_id = meta.at("dataset").get<std::string>();
    cache.seed = meta.at("seed").get<uint64_t>();
    const json& sj = meta.at("shape");
    cache.x_adv = Tensor(Shape{sj.at("b").get<int>(), sj.at("h").get<int>(),
                               sj.at("w").get<int>(), sj.at("c").get<int>()});
    cache.labels = meta.at("labels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ArchMismatchError("'" + path + "': metadata missing fields: " + e.what());
  }
  if (!get_f32le(bytes, 9 + meta_len, cache.x_adv.data(), cache.x_adv.size()))
    throw TruncatedBlobError("'" + path + "': truncated blob 'x_adv'");
  if (9 + size_t(meta_len) + cache.x_adv.size() * 4 != bytes.size())
    throw ArchMismatchError("'" + path + "': trailing bytes after image blob");
  return cache;
}

// ---- datasets -----------------------------------------------------------------

Dataset load_eval_dataset(const RunConfig& cfg) {
  OutPaths paths(cfg.output_dir);
  if (cfg.dataset.kind == "synthetic") {
    if (!file_exists(paths.test_bin()))
      throw PrereqError("missing dataset '" + paths.test_bin() + "' (run gen-data first)");
    Dataset ds = load_cifar10_bin(paths.test_bin());
    ds.id = dataset_sidecar_id(cfg, paths) + "/test";
    return ds;
  }
  const std::string path = cfg.dataset.path + "/test.bin";
  if (!file_exists(path)) throw PrereqError("missing dataset '" + path + "'");
  return load_cifar10_bin(path);
}

SplitDataset load_split_dataset(const RunConfig& cfg) {
  OutPaths paths(cfg.output_dir);
  SplitDataset out;
  if (cfg.dataset.kind == "synthetic") {
    if (!file_exists(paths.train_bin()) || !file_exists(paths.test_bin()))
      throw PrereqError("missing dataset under '" + paths.data_dir() +
                        "' (run gen-data first)");
    out.train = load_cifar10_bin(paths.train_bin());
    out.test = load_cifar10_bin(paths.test_bin());
    const std::string id = dataset_sidecar_id(cfg, paths);
    out.train.id = id + "/train";
    out.test.id = id + "/test";
    return out;
  }
  const std::string train_path = cfg.dataset.path + "/train.bin";
  const std::string test_path = cfg.dataset.path + "/test.bin";
  if (!file_exists(train_path)) throw PrereqError("missing dataset '" + train_path + "'");
  if (!file_exists(test_path)) throw PrereqError("missing dataset '" + test_path + "'");
  out.train = load_cifar10_bin(train_path);
  out.test = load_cifar10_bin(test_path);
  return out;
}

// ---- commands -------------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg) {
  OutPaths paths(cfg.output_dir);
  if (cfg.dataset.kind == "cifar10-bin") {
    // nothing to generate; just verify the opt-in files
    if (!file_exists(cfg.dataset.path + "/test.bin"))
      throw PrereqError("missing dataset '" + cfg.dataset.path + "/test.bin'");
    return;
  }
  SynthConfig sc;
  sc.train_count = cfg.dataset.train_count;
  sc.test_count = cfg.dataset.test_count;
  sc.size = cfg.dataset.size;
  sc.classes = cfg.dataset.classes;
  sc.seed = cfg.dataset.seed;
  SplitDataset ds = generate_synthetic_shapes(sc);
  save_cifar10_bin(paths.train_bin(), ds.train);
  save_cifar10_bin(paths.test_bin(), ds.test);
  json sidecar;
  std::string base_id = ds.train.id.substr(0, ds.train.id.rfind("/train"));
  sidecar["id"] = base_id;
  sidecar["kind"] = "synthetic";
  sidecar["seed"] = sc.seed;
  sidecar["size"] = sc.size;
  sidecar["classes"] = sc.classes;
  sidecar["train_count"] = sc.train_count;
  sidecar["test_count"] = sc.test_count;
  write_file_atomic(paths.dataset_json(), sidecar.dump(2) + "\n");
}

void cmd_train(const RunConfig& cfg, const std::string& model_name) {
  OutPaths paths(cfg.output_dir);
  SplitDataset data = load_split_dataset(cfg);
  bool found = false;
  for (size_t i = 0; i < cfg.zoo.models.size(); ++i) {
    const ZooModelConfig& mc = cfg.zoo.models[i];
    if (!model_name.empty() && mc.name != model_name) continue;
    found = true;
    ModelGraph m = build_arch(mc.arch, InputSpec{cfg.dataset.size, cfg.dataset.size, 3,
                                                 cfg.dataset.classes});
    m.name = mc.name;
    TrainConfig tc = cfg.zoo.train;
    tc.seed = cfg.zoo.train.seed + i;  // stable per-model stream
    tc.adv_train = mc.adv_train;
    TrainMetrics metrics = train(m, data, tc);
    save_checkpoint(m, paths.checkpoint(mc.name));
    std::printf("trained %-12s arch=%-10s train_acc=%.4f test_acc=%.4f\n", mc.name.c_str(),
                mc.arch.c_str(), double(metrics.train_acc), double(metrics.test_acc));
  }
  if (!found) throw ConfigError("unknown model '" + model_name + "'");
}

static AeCache craft_to_cache(const RunConfig& cfg, const OutPaths& paths,
                              const std::vector<std::string>& white_boxes,
                              const std::string& attack_name) {
  const NamedAttack& attack = cfg.find_attack(attack_name);
  Dataset eval = load_eval_dataset(cfg);
  std::vector<ModelGraph> models;
  for (const auto& wb : white_boxes) models.push_back(load_model(cfg, paths, wb));
  EnsembleSpec ens{refs(models)};
  AeCache cache;
  cache.white_boxes = white_boxes;
  cache.attack = attack_name;
  cache.dataset_id = eval.id;
  cache.seed = attack.cfg.seed;
  cache.labels = eval.labels;
  cache.x_adv = craft(ens, eval.images, eval.labels, attack.cfg);
  return cache;
}

void cmd_attack(const RunConfig& cfg, const std::vector<std::string>& white_boxes,
                const std::string& attack_name) {
  if (white_boxes.empty()) throw ConfigError("attack: no white-box models given");
  OutPaths paths(cfg.output_dir);
  AeCache cache = craft_to_cache(cfg, paths, white_boxes, attack_name);
  const std::string path = paths.ae_cache(join_plus(white_boxes), attack_name);
  save_ae_cache(path, cache);
  std::printf("crafted %d AEs (%s on %s) -> %s\n", cache.x_adv.shape().b,
              attack_name.c_str(), join_plus(white_boxes).c_str(), path.c_str());
}

void cmd_eval_clean(const RunConfig& cfg, const TransformSpec& spec) {
  OutPaths paths(cfg.output_dir);
  Dataset eval = load_eval_dataset(cfg);
  std::vector<ModelGraph> models = load_black_boxes(cfg, paths, {});
  TransferReport report = clean_transform_protocol(refs(models), eval, spec);
  const std::string out = paths.reports_dir() + "/clean_" + spec.file_tag() + ".csv";
  write_file_atomic(out, transfer_to_csv({report}));
  std::printf("clean protocol (%s) -> %s\n", spec.str().c_str(), out.c_str());
}

void cmd_eval(const RunConfig& cfg, const std::vector<std::string>& white_boxes,
              const std::string& attack_name, const TransformSpec& spec) {
  OutPaths paths(cfg.output_dir);
  const std::string wb_key = join_plus(white_boxes);
  const std::string cache_path = paths.ae_cache(wb_key, attack_name);
  if (!file_exists(cache_path))
    throw PrereqError("missing AE cache '" + cache_path + "' (run the attack command first)");
  AeCache cache = load_ae_cache(cache_path);
  std::vector<ModelGraph> bbs = load_black_boxes(cfg, paths, cache.white_boxes);
  TransferReport meta;
  meta.white_boxes = cache.white_boxes;
  meta.attack = cache.attack;
  meta.dataset_id = cache.dataset_id;
  meta.seed = cache.seed;
  TransferReport report = evaluate_transfer(refs(bbs), cache.x_adv, cache.labels, spec,
                                            std::move(meta));
  const std::string kind = white_boxes.size() > 1 ? "ensemble" : "single";
  const std::string out = paths.reports_dir() + "/" + kind + "_" + wb_key + "__" +
                          attack_name + "__" + spec.file_tag() + ".csv";
  write_file_atomic(out, transfer_to_csv({report}));
  RatioStats ratios = transfer_ratios(report);
  std::printf("%s protocol (%s on %s, %s) -> %s [ratio max=%.2f mean=%.2f over %d cells]\n",
              kind.c_str(), attack_name.c_str(), wb_key.c_str(), spec.str().c_str(),
              out.c_str(), ratios.max_ratio, ratios.mean_ratio, ratios.cells);
}

void cmd_sweep(const RunConfig& cfg, const std::string& white_box,
               const std::string& attack_name, int stride) {
  OutPaths paths(cfg.output_dir);
  const std::string cache_path = paths.ae_cache(white_box, attack_name);
  if (!file_exists(cache_path))
    throw PrereqError("missing AE cache '" + cache_path + "' (run the attack command first)");
  AeCache cache = load_ae_cache(cache_path);
  std::vector<ModelGraph> bbs = load_black_boxes(cfg, paths, cache.white_boxes);
  std::vector<SweepCurve> meta(bbs.size());
  for (SweepCurve& c : meta) {
    c.white_box = join_plus(cache.white_boxes);
    c.attack = cache.attack;
    c.dataset_id = cache.dataset_id;
    c.seed = cache.seed;
  }
  std::vector<SweepCurve> curves =
      sweep_evaluate(refs(bbs), cache.x_adv, cache.labels, stride, std::move(meta));
  for (const SweepCurve& c : curves) {
    const std::string out = paths.reports_dir() + "/sweep_" + white_box + "__" + attack_name +
                            "__" + c.black_box + ".csv";
    write_file_atomic(out, sweep_to_csv(c));
  }
  const std::string svg_path =
      paths.reports_dir() + "/sweep_" + white_box + "__" + attack_name + ".svg";
  write_file_atomic(svg_path, sweep_to_svg(curves));
  std::printf("sweep (%s on %s, stride %d) -> %s\n", attack_name.c_str(), white_box.c_str(),
              stride, svg_path.c_str());
}

void cmd_featdiff(const RunConfig& cfg, const std::string& white_box,
                  const std::string& black_box, const std::string& attack_name,
                  const std::string& layer, int k, float angle_deg) {
  OutPaths paths(cfg.output_dir);
  const std::string cache_path = paths.ae_cache(white_box, attack_name);
  if (!file_exists(cache_path))
    throw PrereqError("missing AE cache '" + cache_path + "' (run the attack command first)");
  AeCache cache = load_ae_cache(cache_path);
  for (const auto& wb : cache.white_boxes)
    if (wb == black_box)
      throw ConfigError("featdiff black box '" + black_box + "' was a crafting white box");
  ModelGraph bb = load_model(cfg, paths, black_box);

  // find an AE that fails raw but fools the black box after the rotation
  std::vector<int> pred_raw = predict(bb, cache.x_adv);
  Tensor rotated = rotate(cache.x_adv, angle_deg);
  std::vector<int> pred_rot = predict(bb, rotated);
  int pick = -1;
  for (int i = 0; i < cache.x_adv.shape().b; ++i) {
    const bool fooled_raw = pred_raw[size_t(i)] != cache.labels[size_t(i)];
    const bool fooled_rot = pred_rot[size_t(i)] != cache.labels[size_t(i)];
    if (!fooled_raw && fooled_rot) {
      pick = i;
      break;
    }
  }
  if (pick < 0)
    throw PrereqError("no qualifying pair in '" + cache_path + "': need an AE that fails on '" +
                      black_box + "' raw but fools it after a " + format_double(angle_deg) +
                      " deg rotation");

  Dataset one = select_images(Dataset{cache.x_adv, cache.labels, 10, cache.dataset_id}, {pick});
  Tensor x_fail = one.images;
  Tensor x_success = rotate(x_fail, angle_deg);
  FeatureDiffReport report = feature_diff(bb, x_fail, x_success, layer, k);
  if (!report.warning.empty()) std::fprintf(stderr, "warning: %s\n", report.warning.c_str());

  const std::string dir = paths.reports_dir() + "/featdiff_" + black_box + "__" + layer;
  write_ppm(dir + "/input_fail.ppm", report.input_fail);
  write_ppm(dir + "/input_rotated.ppm", report.input_success);
  write_ppm(dir + "/maps_without.ppm", report.grid_without);
  write_ppm(dir + "/maps_with.ppm", report.grid_with);
  write_ppm(dir + "/maps_diff.ppm", report.grid_diff);
  std::string csv = "channel,mean_abs_diff\n";
  for (size_t i = 0; i < report.channels.size(); ++i)
    csv += std::to_string(report.channels[i]) + "," + format_double(report.mean_abs_diff[i]) + "\n";
  write_file_atomic(dir + "/channels.csv", csv);
  std::printf("featdiff (image %d, layer %s, k=%d) -> %s\n", pick, layer.c_str(), k,
              dir.c_str());
}

void run_pipeline(const RunConfig& cfg_in, const std::string& out_dir) {
  RunConfig cfg = cfg_in;
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  OutPaths paths(cfg.output_dir);
  cmd_gen_data(cfg);
  cmd_train(cfg, "");

  // craft each (white boxes, attack) pair once, reuse across protocols
  auto ensure_cache = [&](const std::vector<std::string>& wbs, const std::string& attack) {
    const std::string path = paths.ae_cache(join_plus(wbs), attack);
    if (!file_exists(path)) cmd_attack(cfg, wbs, attack);
  };

  for (const ProtocolConfig& p : cfg.protocols) {
    if (p.kind == "clean") {
      cmd_eval_clean(cfg, p.transform);
    } else if (p.kind == "single") {
      ensure_cache({p.whitebox}, p.attack);
      cmd_eval(cfg, {p.whitebox}, p.attack, p.transform);
    } else if (p.kind == "ensemble") {
      ensure_cache(p.ensemble, p.attack);
      cmd_eval(cfg, p.ensemble, p.attack, p.transform);
    } else if (p.kind == "sweep") {
      ensure_cache({p.whitebox}, p.attack);
      cmd_sweep(cfg, p.whitebox, p.attack, p.stride);
    } else if (p.kind == "featdiff") {
      ensure_cache({p.whitebox}, p.attack);
      cmd_featdiff(cfg, p.whitebox, p.blackbox, p.attack, p.layer, p.k, p.angle);
    }
  }
}

}  // namespace xpose
