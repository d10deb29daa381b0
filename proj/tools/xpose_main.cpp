#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xpose/errors.hpp"
#include "xpose/pipeline.hpp"

namespace {

// machine-readable failure line, one per run
int fail(int code, const char* kind, const std::string& msg) {
  std::fprintf(stderr, "XPOSE-ERROR code=%d kind=%s msg=\"%s\"\n", code, kind, msg.c_str());
  return code;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      if (start < s.size()) out.push_back(s.substr(start));
      break;
    }
    if (pos > start) out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "xpose: transferability lab for geometric input transforms on adversarial examples.\n"
      "Rotation convention: positive angles are counter-clockwise (\"left\"); a 1-degree\n"
      "right rotation is rotate:359. XPOSE_SEED overrides every configured seed.\n"
      "Exit codes: 0 ok, 1 config error, 2 missing prerequisite, 3 numeric failure."};
  app.require_subcommand(1);

  std::string config_path;

  auto* gen = app.add_subcommand("gen-data", "generate (or verify) the dataset files");

  auto* train = app.add_subcommand("train", "train zoo models and write checkpoints");
  std::string model_name;
  train->add_option("--model", model_name, "train only this model (default: all)");

  auto* attack = app.add_subcommand("attack", "craft AEs on the test set and cache them");
  std::string whitebox, ensemble, attack_name;
  attack->add_option("--whitebox", whitebox, "white-box model name");
  attack->add_option("--ensemble", ensemble, "comma-separated ensemble member names");
  attack->add_option("--attack", attack_name, "attack name from the config (default: first)");

  auto* eval = app.add_subcommand("eval", "evaluate cached AEs (or clean images) on black boxes");
  std::string transform = "identity";
  bool clean = false;
  std::string eval_whitebox, eval_ensemble, eval_attack;
  eval->add_option("--transform", transform, "identity|transpose|fliplr|rotate:<deg>");
  eval->add_flag("--clean", clean, "clean-image protocol: no AEs, all models evaluated");
  eval->add_option("--whitebox", eval_whitebox, "white-box model name");
  eval->add_option("--ensemble", eval_ensemble, "comma-separated ensemble member names");
  eval->add_option("--attack", eval_attack, "attack name from the config (default: first)");

  auto* sweep = app.add_subcommand("sweep", "success rate vs rotation angle over a full turn");
  int stride = 10;
  std::string sweep_whitebox, sweep_attack;
  sweep->add_option("--stride", stride, "angle increment in degrees (must divide 360)");
  sweep->add_option("--whitebox", sweep_whitebox, "white-box model name");
  sweep->add_option("--attack", sweep_attack, "attack name from the config (default: first)");

  auto* featdiff = app.add_subcommand("featdiff", "top-K feature-map difference grids");
  std::string fd_layer, fd_whitebox, fd_blackbox, fd_attack;
  int fd_k = 16;
  float fd_angle = 1.0f;
  featdiff->add_option("--layer", fd_layer, "layer to tap")->required();
  featdiff->add_option("--k", fd_k, "channels to keep (default 16)");
  featdiff->add_option("--whitebox", fd_whitebox, "white-box model name");
  featdiff->add_option("--blackbox", fd_blackbox, "black-box model name")->required();
  featdiff->add_option("--attack", fd_attack, "attack name from the config (default: first)");
  featdiff->add_option("--angle", fd_angle, "rotation in degrees CCW (default 1)");

  auto* report = app.add_subcommand("report", "run the whole pipeline from the config");
  std::string out_dir;
  report->add_option("--out", out_dir, "output directory (default: config output_dir)");

  for (CLI::App* sub : {gen, train, attack, eval, sweep, featdiff, report})
    sub->add_option("--config", config_path, "run config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    xpose::RunConfig cfg = xpose::load_run_config(config_path);
    auto default_attack = [&](const std::string& name) {
      if (!name.empty()) return name;
      if (cfg.attacks.empty()) throw xpose::ConfigError("config has no attacks");
      return cfg.attacks[0].name;
    };
    auto white_boxes = [&](const std::string& wb, const std::string& ens) {
      if (!wb.empty() && !ens.empty())
        throw xpose::ConfigError("give either --whitebox or --ensemble, not both");
      if (!ens.empty()) return split_commas(ens);
      if (!wb.empty()) return std::vector<std::string>{wb};
      throw xpose::ConfigError("need --whitebox NAME or --ensemble A,B,C");
    };

    if (gen->parsed()) {
      xpose::cmd_gen_data(cfg);
    } else if (train->parsed()) {
      xpose::cmd_train(cfg, model_name);
    } else if (attack->parsed()) {
      xpose::cmd_attack(cfg, white_boxes(whitebox, ensemble), default_attack(attack_name));
    } else if (eval->parsed()) {
      xpose::TransformSpec spec = xpose::TransformSpec::parse(transform);
      if (clean)
        xpose::cmd_eval_clean(cfg, spec);
      else
        xpose::cmd_eval(cfg, white_boxes(eval_whitebox, eval_ensemble),
                        default_attack(eval_attack), spec);
    } else if (sweep->parsed()) {
      if (sweep_whitebox.empty()) throw xpose::ConfigError("sweep needs --whitebox NAME");
      xpose::cmd_sweep(cfg, sweep_whitebox, default_attack(sweep_attack), stride);
    } else if (featdiff->parsed()) {
      if (fd_whitebox.empty()) throw xpose::ConfigError("featdiff needs --whitebox NAME");
      xpose::cmd_featdiff(cfg, fd_whitebox, fd_blackbox, default_attack(fd_attack), fd_layer,
                          fd_k, fd_angle);
    } else if (report->parsed()) {
      xpose::run_pipeline(cfg, out_dir);
    }
  } catch (const xpose::PrereqError& e) {
    return fail(2, "prerequisite", e.what());
  } catch (const xpose::NumericError& e) {
    return fail(3, "numeric", e.what());
  } catch (const xpose::ConfigError& e) {
    return fail(1, "config", e.what());
  } catch (const std::exception& e) {
    return fail(1, "config", e.what());
  }
  return 0;
}
