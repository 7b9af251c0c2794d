#include "cli.hpp"

#include <CLI11.hpp>
#include <ostream>

#include "commands.hpp"
#include "vcead/checkpoint.hpp"
#include "vcead/data.hpp"
#include "vcead/ensemble.hpp"
#include "vcead/metrics.hpp"
#include "vcead/train.hpp"

namespace vcead::cli {

namespace {

struct CommonFlags {
  std::string config, manifest, test_manifest, class_map, preset, out;
  std::uint64_t seed = 0;
  std::size_t threads = 0, size = 0, epochs = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "Run config JSON");
  f.seed_opt = sub->add_option("--seed", f.seed, "Run seed (overrides the config)");
  sub->add_option("--out", f.out, "Root directory for run directories");
  sub->add_option("--threads", f.threads, "Worker threads for forest fitting");
  sub->add_option("--manifest", f.manifest, "Training manifest CSV");
  sub->add_option("--test-manifest", f.test_manifest, "Separate test manifest CSV");
  sub->add_option("--class-map", f.class_map, "kvasir, galar or synthetic");
  sub->add_option("--preset", f.preset, "Encoder preset");
  sub->add_option("--size", f.size, "Image side length");
  sub->add_option("--epochs", f.epochs, "Epochs for every learner");
}

struct CheckpointFlags {
  std::string clf, ae, semi;
};

void add_checkpoints(CLI::App* sub, CheckpointFlags& c) {
  sub->add_option("--clf", c.clf, "Classifier checkpoint");
  sub->add_option("--ae", c.ae, "Autoencoder checkpoint");
  sub->add_option("--semi", c.semi, "Semi-supervised checkpoint");
}

RunConfig build_config(const CommonFlags& f, std::size_t draws) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
  if (f.seed_opt->count()) cfg.seed = f.seed;
  if (!f.manifest.empty()) {
    if (!cfg.data) cfg.data.emplace();
    cfg.data->manifest = f.manifest;
  }
  if (!f.test_manifest.empty()) {
    if (!cfg.test) cfg.test.emplace();
    cfg.test->manifest = f.test_manifest;
  }
  if (!f.class_map.empty()) {
    if (cfg.data) cfg.data->class_map = f.class_map;
    if (cfg.test) cfg.test->class_map = f.class_map;
  }
  if (!f.preset.empty()) cfg.preset = f.preset;
  if (f.size) cfg.image_size = f.size;
  if (!f.out.empty()) cfg.out = f.out;
  if (f.threads) cfg.threads = f.threads;
  if (f.epochs)
    for (const char* name : {"clf", "ae", "semi"}) cfg.learners[name].train.epochs = f.epochs;
  if (draws) cfg.ensemble.draws = draws;
  return cfg;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Capsule endoscopy anomaly detection with a three-learner ensemble", "vcead"};
  app.require_subcommand(1);

  SynthArgs synth;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "Write a synthetic PNG dataset with a manifest");
  s->add_option("--normal", synth.normal, "Normal images")->capture_default_str();
  s->add_option("--anomaly", synth.anomaly, "Anomaly images")->capture_default_str();
  s->add_option("--size", synth.size, "Image side length")->capture_default_str();
  s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s->add_option("--patient-prefix", synth.patient_prefix, "Patient id prefix")->capture_default_str();
  s->add_option("--group-size", synth.group_size, "Images per patient")->capture_default_str();
  s->add_option("--out", synth_out, "Output directory")->required();

  CommonFlags train_flags;
  std::string learner;
  auto* t = app.add_subcommand("train", "Train one base learner");
  t->add_option("learner", learner, "clf, ae or semi")
      ->required()
      ->check(CLI::IsMember({"clf", "ae", "semi"}));
  add_common(t, train_flags);

  CommonFlags fit_flags;
  CheckpointFlags fit_ckpt;
  std::string kind;
  std::size_t fit_draws = 0;
  auto* fe = app.add_subcommand("fit-ensemble", "Tune and fit a combiner on base-learner features");
  fe->add_option("kind", kind, "rf or svm")->required()->check(CLI::IsMember({"rf", "svm"}));
  add_checkpoints(fe, fit_ckpt);
  fe->add_option("--draws", fit_draws, "Random-search draws");
  add_common(fe, fit_flags);

  CommonFlags eval_flags;
  CheckpointFlags eval_ckpt;
  std::vector<std::string> models;
  auto* ev = app.add_subcommand("eval", "Evaluate fitted combiners on a test set");
  ev->add_option("--model", models, "Fitted model JSON (repeatable)")->required();
  add_checkpoints(ev, eval_ckpt);
  add_common(ev, eval_flags);

  CommonFlags pipe_flags;
  std::size_t pipe_draws = 0;
  auto* pp = app.add_subcommand("pipeline", "Train all learners, fit both combiners and evaluate");
  pp->add_option("--draws", pipe_draws, "Random-search draws");
  add_common(pp, pipe_flags);

  std::string rerun_dir, rerun_out;
  auto* rr = app.add_subcommand("rerun", "Replay a run directory from its resolved config");
  rr->add_option("run_dir", rerun_dir, "Run directory")->required();
  rr->add_option("--out", rerun_out, "Root for the new run directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (s->parsed()) {
      synth.out = synth_out;
      cmd_synth(synth, out);
    } else if (t->parsed()) {
      cmd_train(learner, build_config(train_flags, 0), out);
    } else if (fe->parsed()) {
      cmd_fit_ensemble(kind, {fit_ckpt.clf, fit_ckpt.ae, fit_ckpt.semi},
                       build_config(fit_flags, fit_draws), out);
    } else if (ev->parsed()) {
      std::vector<std::filesystem::path> paths(models.begin(), models.end());
      cmd_eval(paths, {eval_ckpt.clf, eval_ckpt.ae, eval_ckpt.semi}, build_config(eval_flags, 0),
               out);
    } else if (pp->parsed()) {
      cmd_pipeline(build_config(pipe_flags, pipe_draws), out);
    } else if (rr->parsed()) {
      std::optional<std::filesystem::path> root;
      if (!rerun_out.empty()) root = rerun_out;
      cmd_rerun(rerun_dir, root, out);
    }
    return kOk;
  } catch (const UnwritableError& e) {
    err << "error: " << e.what() << "\n";
    return kUnwritable;
  } catch (const MissingCheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingCheckpoint;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    return kMissingCheckpoint;
  } catch (const SingleClassError& e) {
    err << "error: " << e.what() << "\n";
    return kSingleClassTest;
  } catch (const train::TrainError& e) {
    err << "error: " << e.what() << "\n";
    return kPrecondition;
  } catch (const ensemble::EnsembleError& e) {
    err << "error: " << e.what() << "\n";
    return kPrecondition;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kUnwritable;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace vcead::cli
