#include "commands.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "vcead/checkpoint.hpp"
#include "vcead/data.hpp"
#include "vcead/ensemble.hpp"
#include "vcead/metrics.hpp"
#include "vcead/nets.hpp"
#include "vcead/train.hpp"

namespace vcead::cli {

namespace fs = std::filesystem;
using data::Label;
using data::Sample;
using nlohmann::json;

namespace {

const std::array<std::string, 3> kLearnerNames{"clf", "ae", "semi"};

// ---- files and run directories ----

fs::path make_run_dir(const fs::path& root, std::uint64_t seed) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw UnwritableError("cannot create " + root.string() + ": " + ec.message());
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string(stamp) + "_" + std::to_string(seed);
  for (int k = 0;; ++k) {
    const fs::path dir = root / (k == 0 ? base : base + "-" + std::to_string(k));
    if (fs::create_directory(dir, ec)) return dir;
    if (ec) throw UnwritableError("cannot create " + dir.string() + ": " + ec.message());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw UnwritableError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw UnwritableError("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Wraps writers from the library, which report failures as runtime errors.
template <typename F>
void writing(const fs::path& path, F&& f) {
  try {
    f();
  } catch (const UnwritableError&) {
    throw;
  } catch (const std::exception& e) {
    throw UnwritableError("cannot write " + path.string() + ": " + e.what());
  }
}

fs::path normalized(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

void absolutize(RunConfig& cfg) {
  if (cfg.data) cfg.data->manifest = normalized(cfg.data->manifest);
  if (cfg.test) cfg.test->manifest = normalized(cfg.test->manifest);
  if (cfg.split.file) cfg.split.file = normalized(*cfg.split.file);
}

CheckpointPaths absolutize(const CheckpointPaths& c) {
  const auto abs_or_empty = [](const fs::path& p) { return p.empty() ? p : normalized(p); };
  return {abs_or_empty(c.clf), abs_or_empty(c.ae), abs_or_empty(c.semi)};
}

json checkpoints_json(const CheckpointPaths& c) {
  return {{"clf", c.clf.string()}, {"ae", c.ae.string()}, {"semi", c.semi.string()}};
}

void write_resolved(const fs::path& dir, const RunConfig& cfg, const json& command) {
  json j = cfg.to_json();
  j["command"] = command;
  write_json(dir / "resolved_config.json", j);
}

// ---- data ----

struct Datasets {
  std::vector<Sample> train, val, test;
  data::SplitSpec split;
};

std::vector<Sample> load_source(const DatasetSource& src, std::size_t image_size) {
  const auto map = data::ClassMap::by_name(src.class_map);
  return data::load_manifest(src.manifest, map, image_size).samples;
}

std::vector<Sample> labeled(const std::vector<Sample>& s) {
  std::vector<Sample> out;
  for (const auto& x : s)
    if (x.label != Label::unlabeled) out.push_back(x);
  return out;
}

std::vector<Sample> apply_filter(const std::vector<Sample>& s, SampleFilter f) {
  if (f == SampleFilter::labeled) return labeled(s);
  if (f == SampleFilter::normal_or_unlabeled) return train::autoencoder_inputs(s);
  return s;
}

Datasets load_datasets(const RunConfig& cfg, std::size_t image_size) {
  if (!cfg.data) throw ConfigError("no dataset: set data.manifest in the config or pass --manifest");
  const auto all = load_source(*cfg.data, image_size);
  std::vector<std::string> patients;
  for (const auto& s : all) patients.push_back(s.patient_id);
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());

  Datasets ds;
  if (cfg.split.file) {
    ds.split = data::SplitSpec::load(*cfg.split.file);
  } else {
    std::vector<std::string> reserved;
    if (!cfg.test && cfg.split.test_fraction > 0) {
      auto shuffled = patients;
      std::mt19937_64 rng(*cfg.split.seed ^ 0x7E57ull);
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto k = static_cast<std::size_t>(
          std::lround(cfg.split.test_fraction * static_cast<double>(shuffled.size())));
      reserved.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(k, shuffled.size())));
    }
    ds.split = data::patient_split(patients, cfg.split.train_ratio, *cfg.split.seed, reserved);
  }
  ds.train = data::select(all, ds.split, data::SplitSpec::Part::train);
  ds.val = data::select(all, ds.split, data::SplitSpec::Part::val);
  if (cfg.test) {
    ds.test = load_source(*cfg.test, image_size);
    for (const auto& s : ds.test) {
      const auto part = ds.split.part_of(s.patient_id);
      if (part == data::SplitSpec::Part::train || part == data::SplitSpec::Part::val)
        throw data::DataError("test manifest patient '" + s.patient_id +
                              "' also appears in the training data");
    }
  } else {
    ds.test = data::select(all, ds.split, data::SplitSpec::Part::test);
  }
  if (ds.train.empty()) throw data::DataError("the train split is empty");
  return ds;
}

std::vector<Sample> test_samples(const RunConfig& cfg, std::size_t image_size) {
  if (cfg.test) return load_source(*cfg.test, image_size);
  if (cfg.data) return load_datasets(cfg, image_size).test;
  throw ConfigError("no test set: set test.manifest or data.manifest, or pass --test-manifest");
}

std::vector<int> binary(const std::vector<Sample>& s) {
  std::vector<int> y;
  for (const auto& x : s) y.push_back(x.label == Label::anomaly ? 1 : 0);
  return y;
}

void require_two_classes(const std::vector<Sample>& test) {
  const auto y = binary(test);
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos == 0 || static_cast<std::size_t>(pos) == y.size())
    throw SingleClassError("the labeled test set has " + std::to_string(pos) + " anomalies and " +
                           std::to_string(y.size() - static_cast<std::size_t>(pos)) +
                           " normals; AUC is undefined");
}

// ---- training ----

void train_learner(const std::string& name, const RunConfig& cfg, const Datasets& ds,
                   const fs::path& dir, std::ostream& out) {
  const auto& ls = cfg.learners.at(name);
  const auto kind = nets::learner_from_string(name);
  const auto set = apply_filter(ds.train, *ls.filter);
  auto run = [&]<typename T>() {
    auto learner = nets::make_learner<T>(kind, cfg.preset, cfg.in_channels, cfg.image_size,
                                         init_seed(*ls.seed, name));
    out << name << ": training on " << set.size() << " samples for " << ls.train.epochs
        << " epochs\n";
    train::TrainReport r;
    if (kind == nets::LearnerKind::classifier)
      r = train::train_classifier(learner, set, ds.val, ls.train);
    else if (kind == nets::LearnerKind::autoencoder)
      r = train::train_autoencoder(learner, set, ds.val, ls.train);
    else
      r = train::train_semi(learner, set, ds.val, ls.train);
    const fs::path ckpt = dir / (name + ".ckpt");
    writing(ckpt, [&] { save_checkpoint(learner, ckpt); });
    r.checkpoint = ckpt.filename().string();
    write_json(dir / (name + "_report.json"), r.to_json());
    for (const auto& e : r.epochs) {
      out << "  epoch " << std::setw(3) << e.epoch << "  loss " << std::setprecision(5)
          << e.train_loss;
      if (e.val_auc) out << "  val_auc " << std::setprecision(4) << *e.val_auc;
      out << "\n";
    }
    out.flush();
  };
  if (ls.train.precision == "f64")
    run.template operator()<double>();
  else
    run.template operator()<float>();
}

// ---- checkpoints and features ----

struct BundleMeta {
  std::string preset;
  std::size_t image_size = 0, in_channels = 0;
  bool f64 = false;
};

BundleMeta inspect_checkpoints(const CheckpointPaths& c) {
  const std::array<std::pair<std::string, fs::path>, 3> items{
      {{"clf", c.clf}, {"ae", c.ae}, {"semi", c.semi}}};
  BundleMeta m;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& [name, path] = items[i];
    if (path.empty()) throw MissingCheckpointError("no --" + name + " checkpoint given");
    if (!fs::is_regular_file(path))
      throw MissingCheckpointError(name + " checkpoint not found: " + path.string());
    CheckpointInfo info;
    try {
      info = read_checkpoint_info(path);
    } catch (const CheckpointError& e) {
      throw MissingCheckpointError(name + " checkpoint unreadable: " + e.what());
    }
    if (info.kind != nets::learner_from_string(name))
      throw MissingCheckpointError(path.string() + " holds a " +
                                   std::string(nets::to_string(info.kind)) + " learner, not " +
                                   name);
    if (!info.trained) throw MissingCheckpointError(path.string() + " is untrained");
    if (i == 0) {
      m.preset = info.preset;
      m.image_size = info.image_size;
      m.in_channels = info.in_channels;
    } else if (info.preset != m.preset || info.image_size != m.image_size ||
               info.in_channels != m.in_channels) {
      throw MissingCheckpointError("checkpoints disagree on preset, image size or channels");
    }
    m.f64 = m.f64 || info.precision == "f64";
  }
  return m;
}

std::vector<ensemble::FeatureVector> extract(const CheckpointPaths& c, const BundleMeta& m,
                                             const std::vector<Sample>& samples) {
  auto go = [&]<typename T>() {
    const auto bundle = nets::make_bundle(load_checkpoint<T>(c.clf), load_checkpoint<T>(c.ae),
                                          load_checkpoint<T>(c.semi));
    return ensemble::extract_features(bundle, samples);
  };
  try {
    return m.f64 ? go.template operator()<double>() : go.template operator()<float>();
  } catch (const CheckpointError& e) {
    throw MissingCheckpointError(e.what());
  }
}

// ---- ensembles ----

ensemble::Combiner fit_and_save(const std::string& kind, const ensemble::Table& x,
                                const std::vector<int>& y, const RunConfig& cfg,
                                const fs::path& dir, std::ostream& out) {
  ensemble::SearchOptions opt;
  opt.n_draws = cfg.ensemble.draws;
  opt.seed = cfg.seed;
  opt.tune_fraction = cfg.ensemble.tune_fraction;
  opt.threads = cfg.threads;

  json search{{"kind", kind},
              {"draws", opt.n_draws},
              {"tune_fraction", opt.tune_fraction},
              {"seed", opt.seed},
              {"rows", x.size()}};
  ensemble::Combiner combiner;
  std::vector<ensemble::SearchDraw> log;
  if (kind == "rf") {
    search["grid"] = cfg.ensemble.rf.to_json();
    auto r = ensemble::search_forest(x, y, cfg.ensemble.rf, opt);
    search["best_draw"] = r.best_draw;
    search["best_params"] = ensemble::to_json(r.best);
    combiner.model = std::move(r.model);
    log = std::move(r.log);
  } else {
    search["grid"] = cfg.ensemble.svm.to_json();
    auto r = ensemble::search_svm(x, y, cfg.ensemble.svm, opt);
    search["best_draw"] = r.best_draw;
    search["best_params"] = ensemble::to_json(r.best);
    combiner.model = std::move(r.model);
    log = std::move(r.log);
  }
  search["best_tuning_auc"] = log.at(search["best_draw"].get<std::size_t>()).auc;
  write_json(dir / "model.json", combiner.to_json());
  writing(dir / "tuning_log.csv", [&] { ensemble::write_tuning_log(dir / "tuning_log.csv", log); });
  write_json(dir / "search.json", search);
  out << kind << ": random search over " << search["grid"].dump() << "\n"
      << "  " << opt.n_draws << " draws, best draw " << search["best_draw"] << " "
      << search["best_params"].dump() << " tuning AUC " << std::setprecision(4)
      << search["best_tuning_auc"].get<double>() << "\n";
  return combiner;
}

json report_json(const metrics::Report& r) {
  return {{"auc", r.auc},
          {"recall", r.recall},
          {"accuracy", r.accuracy},
          {"f1", r.f1},
          {"mcc", r.mcc},
          {"precision", r.precision},
          {"confusion",
           {{"tp", r.confusion.tp}, {"tn", r.confusion.tn}, {"fp", r.confusion.fp},
            {"fn", r.confusion.fn}}},
          {"per_class", r.per_class},
          {"per_class_count", r.per_class_count}};
}

const char* outcome(int pred, int label) {
  if (label == 1) return pred == 1 ? "TP" : "FN";
  return pred == 1 ? "FP" : "TN";
}

using NamedModel = std::pair<std::string, ensemble::Combiner>;

void evaluate_all(const std::vector<NamedModel>& models, const CheckpointPaths& ckpt,
                  const BundleMeta& meta, const std::vector<Sample>& test, const fs::path& dir,
                  std::ostream& out) {
  const auto feats = extract(ckpt, meta, test);
  const auto y = binary(test);
  std::vector<std::string> classes;
  for (const auto& s : test) classes.push_back(s.source_class);

  json mj;
  mj["test_samples"] = test.size();
  mj["test_anomalies"] = std::count(y.begin(), y.end(), 1);

  std::vector<std::pair<std::string, metrics::Report>> rows;
  for (const auto& [name, model] : models) {
    std::vector<double> scores;
    std::vector<int> preds;
    for (const auto& f : feats) {
      const auto p = model.predict(f.row());
      scores.push_back(p.score);
      preds.push_back(p.label);
    }
    const auto rep = metrics::evaluate(scores, preds, y, classes);
    mj["models"][name] = report_json(rep);
    mj["models"][name]["kind"] = std::string(ensemble::to_string(model.kind()));
    rows.emplace_back(name, rep);

    const fs::path sub = models.size() == 1 ? dir : dir / name;
    ensure_dir(sub);
    std::ostringstream sc;
    sc.precision(17);
    sc << "logit_margin,log_mse,outcome\n";
    for (std::size_t i = 0; i < feats.size(); ++i)
      sc << feats[i].logit_margin << ',' << feats[i].log_mse << ',' << outcome(preds[i], y[i])
         << '\n';
    write_text(sub / "scatter.csv", sc.str());
    std::ostringstream pc;
    pc.precision(17);
    pc << "source_class,count,correct_fraction\n";
    for (const auto& [cls, frac] : rep.per_class)
      pc << cls << ',' << rep.per_class_count.at(cls) << ',' << frac << '\n';
    write_text(sub / "per_class.csv", pc.str());
  }

  // Base learners on their own: probabilities at 0.5, reconstruction error as a score.
  std::vector<double> clf_p, semi_p, mse, log_mse;
  std::vector<int> clf_pred, semi_pred;
  for (const auto& f : feats) {
    clf_p.push_back(1.0 / (1.0 + std::exp(-f.logit_margin)));
    clf_pred.push_back(clf_p.back() >= 0.5);
    semi_p.push_back(f.semi_prob);
    semi_pred.push_back(f.semi_prob >= 0.5);
    log_mse.push_back(f.log_mse);
    mse.push_back(std::exp(f.log_mse));
  }
  const auto clf_rep = metrics::evaluate(clf_p, clf_pred, y, classes);
  const auto semi_rep = metrics::evaluate(semi_p, semi_pred, y, classes);
  std::vector<double> mse_anom, mse_norm;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? mse_anom : mse_norm).push_back(mse[i]);
  const double ae_auc = metrics::auc(log_mse, y);
  mj["base_learners"]["clf"] = report_json(clf_rep);
  mj["base_learners"]["semi"] = report_json(semi_rep);
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  mj["base_learners"]["ae"] = {{"auc", ae_auc},
                               {"mean_mse_normal", mean(mse_norm)},
                               {"mean_mse_anomaly", mean(mse_anom)},
                               {"welch_p_anomaly_greater", metrics::welch_greater_p(mse_anom, mse_norm)}};
  write_json(dir / "metrics.json", mj);

  out << metrics::table_header() << "\n";
  for (const auto& [name, rep] : rows) out << metrics::table_row(name, rep) << "\n";
  out << metrics::table_row("clf", clf_rep) << "\n" << metrics::table_row("semi", semi_rep) << "\n";
  out << "ae: AUC " << std::fixed << std::setprecision(2) << 100 * ae_auc
      << "  Welch p (anomaly MSE > normal MSE) " << std::scientific << std::setprecision(3)
      << mj["base_learners"]["ae"]["welch_p_anomaly_greater"].get<double>() << "\n"
      << std::defaultfloat;
}

void check_kind(const std::string& kind) {
  if (kind != "rf" && kind != "svm")
    throw ConfigError("ensemble kind must be rf or svm, got '" + kind + "'");
}

void check_learner(const std::string& name) {
  if (std::find(kLearnerNames.begin(), kLearnerNames.end(), name) == kLearnerNames.end())
    throw ConfigError("learner must be clf, ae or semi, got '" + name + "'");
}

ensemble::Combiner load_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingCheckpointError("model file not found: " + path.string());
  try {
    return ensemble::Combiner::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw MissingCheckpointError(path.string() + ": " + e.what());
  } catch (const ensemble::EnsembleError& e) {
    throw MissingCheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace

fs::path cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.out.empty()) throw ConfigError("synth needs --out");
  data::SynthConfig sc;
  sc.n_normal = a.normal;
  sc.n_anomaly = a.anomaly;
  sc.size = a.size;
  sc.seed = a.seed;
  sc.patient_prefix = a.patient_prefix;
  sc.group_size = a.group_size;
  std::vector<Sample> samples;
  try {
    samples = data::synth_dataset(sc);
  } catch (const data::DataError& e) {
    throw ConfigError(e.what());
  }
  ensure_dir(a.out);
  writing(a.out, [&] { data::write_dataset(a.out, samples); });
  write_json(a.out / "synth_config.json", {{"normal", a.normal},
                                           {"anomaly", a.anomaly},
                                           {"size", a.size},
                                           {"seed", a.seed},
                                           {"patient_prefix", a.patient_prefix},
                                           {"group_size", a.group_size},
                                           {"class_map", "synthetic"}});
  out << "wrote " << samples.size() << " images (" << a.normal << " normal, " << a.anomaly
      << " anomaly) and " << (a.out / "manifest.csv").string() << "\n";
  return a.out;
}

fs::path cmd_train(const std::string& learner, RunConfig cfg, std::ostream& out) {
  check_learner(learner);
  cfg.resolve();
  absolutize(cfg);
  const auto ds = load_datasets(cfg, cfg.image_size);
  const auto dir = make_run_dir(cfg.out, cfg.seed);
  write_resolved(dir, cfg, {{"name", "train"}, {"learner", learner}});
  writing(dir / "split.json", [&] { ds.split.save(dir / "split.json"); });
  train_learner(learner, cfg, ds, dir, out);
  out << "run directory: " << dir.string() << "\n";
  return dir;
}

fs::path cmd_fit_ensemble(const std::string& kind, const CheckpointPaths& ckpt_in, RunConfig cfg,
                          std::ostream& out) {
  check_kind(kind);
  cfg.resolve();
  absolutize(cfg);
  const auto ckpt = absolutize(ckpt_in);
  const auto meta = inspect_checkpoints(ckpt);
  const auto ds = load_datasets(cfg, meta.image_size);
  auto fit_set = labeled(ds.train);
  for (const auto& s : labeled(ds.val)) fit_set.push_back(s);

  const auto dir = make_run_dir(cfg.out, cfg.seed);
  write_resolved(dir, cfg,
                 {{"name", "fit-ensemble"}, {"kind", kind}, {"checkpoints", checkpoints_json(ckpt)}});
  const auto feats = extract(ckpt, meta, fit_set);
  const auto y = binary(fit_set);
  writing(dir / "features.csv", [&] { ensemble::write_features_csv(dir / "features.csv", feats, y); });
  fit_and_save(kind, ensemble::to_table(feats), y, cfg, dir, out);
  out << "run directory: " << dir.string() << "\n";
  return dir;
}

fs::path cmd_eval(const std::vector<fs::path>& model_paths, const CheckpointPaths& ckpt_in,
                  RunConfig cfg, std::ostream& out) {
  if (model_paths.empty()) throw ConfigError("eval needs at least one --model");
  cfg.resolve();
  absolutize(cfg);
  const auto ckpt = absolutize(ckpt_in);
  std::vector<fs::path> abs_models;
  std::vector<NamedModel> models;
  for (const auto& p : model_paths) {
    abs_models.push_back(normalized(p));
    auto m = load_model(p);
    std::string name(ensemble::to_string(m.kind()));
    for (int k = 2; std::any_of(models.begin(), models.end(),
                                [&](const NamedModel& n) { return n.first == name; });
         ++k)
      name = std::string(ensemble::to_string(m.kind())) + "_" + std::to_string(k);
    models.emplace_back(name, std::move(m));
  }
  const auto meta = inspect_checkpoints(ckpt);
  const auto test = labeled(test_samples(cfg, meta.image_size));
  require_two_classes(test);

  const auto dir = make_run_dir(cfg.out, cfg.seed);
  json mj = json::array();
  for (const auto& p : abs_models) mj.push_back(p.string());
  write_resolved(dir, cfg,
                 {{"name", "eval"}, {"models", mj}, {"checkpoints", checkpoints_json(ckpt)}});
  evaluate_all(models, ckpt, meta, test, dir, out);
  out << "run directory: " << dir.string() << "\n";
  return dir;
}

fs::path cmd_pipeline(RunConfig cfg, std::ostream& out) {
  cfg.resolve();
  absolutize(cfg);
  const auto ds = load_datasets(cfg, cfg.image_size);
  const auto test = labeled(ds.test);
  require_two_classes(test);

  const auto dir = make_run_dir(cfg.out, cfg.seed);
  write_resolved(dir, cfg, {{"name", "pipeline"}});
  writing(dir / "split.json", [&] { ds.split.save(dir / "split.json"); });
  out << "split: " << ds.train.size() << " train, " << ds.val.size() << " val, " << test.size()
      << " labeled test samples\n";
  for (const auto& name : kLearnerNames) train_learner(name, cfg, ds, dir, out);

  const CheckpointPaths ckpt{dir / "clf.ckpt", dir / "ae.ckpt", dir / "semi.ckpt"};
  const auto meta = inspect_checkpoints(ckpt);
  auto fit_set = labeled(ds.train);
  for (const auto& s : labeled(ds.val)) fit_set.push_back(s);
  const auto feats = extract(ckpt, meta, fit_set);
  const auto y = binary(fit_set);
  writing(dir / "features.csv", [&] { ensemble::write_features_csv(dir / "features.csv", feats, y); });
  const auto table = ensemble::to_table(feats);

  std::vector<NamedModel> models;
  for (const std::string kind : {"rf", "svm"}) {
    ensure_dir(dir / kind);
    models.emplace_back(kind, fit_and_save(kind, table, y, cfg, dir / kind, out));
  }
  evaluate_all(models, ckpt, meta, test, dir, out);
  out << "run directory: " << dir.string() << "\n";
  return dir;
}

fs::path cmd_rerun(const fs::path& run_dir, const std::optional<fs::path>& out_root,
                   std::ostream& out) {
  const fs::path rc = run_dir / "resolved_config.json";
  std::ifstream in(rc);
  if (!in) throw ConfigError("no resolved_config.json in " + run_dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(rc.string() + ": " + e.what());
  }
  if (!j.contains("command")) throw ConfigError(rc.string() + " records no command");
  const json cmd = j.at("command");
  RunConfig cfg = RunConfig::load(rc);
  cfg.out = out_root.value_or(run_dir.lexically_normal().parent_path());
  const auto ckpt_of = [&] {
    const auto& c = cmd.at("checkpoints");
    return CheckpointPaths{c.at("clf").get<std::string>(), c.at("ae").get<std::string>(),
                           c.at("semi").get<std::string>()};
  };
  try {
    const auto name = cmd.at("name").get<std::string>();
    if (name == "pipeline") return cmd_pipeline(cfg, out);
    if (name == "train") return cmd_train(cmd.at("learner").get<std::string>(), cfg, out);
    if (name == "fit-ensemble")
      return cmd_fit_ensemble(cmd.at("kind").get<std::string>(), ckpt_of(), cfg, out);
    if (name == "eval") {
      std::vector<fs::path> models;
      for (const auto& m : cmd.at("models")) models.emplace_back(m.get<std::string>());
      return cmd_eval(models, ckpt_of(), cfg, out);
    }
    throw ConfigError("cannot rerun command '" + name + "'");
  } catch (const json::exception& e) {
    throw ConfigError(rc.string() + ": malformed command record: " + e.what());
  }
}

}  // namespace vcead::cli
