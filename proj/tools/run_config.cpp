#include "run_config.hpp"

#include <algorithm>
#include <fstream>

#include "vcead/nets.hpp"

namespace vcead::cli {

using nlohmann::json;

namespace {

const std::vector<std::string> kLearners{"clf", "ae", "semi"};

void reject_unknown(const json& j, const std::vector<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError(where + ": unknown key '" + k + "'");
}

DatasetSource source_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"manifest", "class_map"}, where);
  DatasetSource s;
  s.manifest = j.at("manifest").get<std::string>();
  s.class_map = j.value("class_map", s.class_map);
  return s;
}

json source_to_json(const DatasetSource& s) {
  return {{"manifest", s.manifest.string()}, {"class_map", s.class_map}};
}

SampleFilter default_filter(const std::string& learner) {
  if (learner == "clf") return SampleFilter::labeled;
  if (learner == "ae") return SampleFilter::normal_or_unlabeled;
  return SampleFilter::all;
}

}  // namespace

std::string to_string(SampleFilter f) {
  switch (f) {
    case SampleFilter::all: return "all";
    case SampleFilter::labeled: return "labeled";
    case SampleFilter::normal_or_unlabeled: return "normal_or_unlabeled";
  }
  return "all";
}

SampleFilter filter_from_string(const std::string& s) {
  if (s == "all") return SampleFilter::all;
  if (s == "labeled") return SampleFilter::labeled;
  if (s == "normal_or_unlabeled") return SampleFilter::normal_or_unlabeled;
  throw ConfigError("unknown sample filter '" + s + "' (all, labeled, normal_or_unlabeled)");
}

std::uint64_t init_seed(std::uint64_t run_seed, const std::string& learner) {
  std::uint64_t offset = 1;
  for (std::size_t i = 0; i < kLearners.size(); ++i)
    if (kLearners[i] == learner) offset = i + 1;
  return run_seed * 1000003ull + offset;
}

void RunConfig::resolve() {
  try {
    const auto& p = nets::preset(preset);
    if (image_size == 0) image_size = p.default_image_size;
    if (image_size % nets::total_stride(p) != 0)
      throw ConfigError("image_size " + std::to_string(image_size) + " is not a multiple of " +
                        std::to_string(nets::total_stride(p)) + " for preset " + preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (in_channels == 0) throw ConfigError("in_channels must be positive");
  if (!split.seed) split.seed = seed;
  if (!(split.train_ratio > 0 && split.train_ratio <= 1))
    throw ConfigError("split.train_ratio must lie in (0, 1]");
  if (!(split.test_fraction >= 0 && split.test_fraction < 1))
    throw ConfigError("split.test_fraction must lie in [0, 1)");
  for (const auto& name : kLearners) {
    auto& l = learners[name];
    if (!l.filter) l.filter = default_filter(name);
    if (!l.seed) l.seed = seed;
    l.train.seed = *l.seed;
    try {
      l.train.validate();
    } catch (const train::TrainError& e) {
      throw ConfigError("learners." + name + ": " + e.what());
    }
  }
  if (ensemble.draws == 0) throw ConfigError("ensemble.draws must be at least 1");
  if (!(ensemble.tune_fraction > 0 && ensemble.tune_fraction < 1))
    throw ConfigError("ensemble.tune_fraction must lie in (0, 1)");
  if (threads == 0) threads = 1;
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["preset"] = preset;
  j["image_size"] = image_size;
  j["in_channels"] = in_channels;
  if (data) j["data"] = source_to_json(*data);
  if (test) j["test"] = source_to_json(*test);
  json s{{"train_ratio", split.train_ratio}, {"test_fraction", split.test_fraction}};
  if (split.seed) s["seed"] = *split.seed;
  if (split.file) s["file"] = split.file->string();
  j["split"] = s;
  j["learners"] = json::object();
  for (const auto& [name, l] : learners) {
    json lj = train::to_json(l.train);
    lj.erase("seed");
    if (l.seed) lj["seed"] = *l.seed;
    if (l.filter) lj["filter"] = to_string(*l.filter);
    j["learners"][name] = lj;
  }
  j["ensemble"] = {{"draws", ensemble.draws},
                   {"tune_fraction", ensemble.tune_fraction},
                   {"rf_grid", ensemble.rf.to_json()},
                   {"svm_grid", ensemble.svm.to_json()}};
  j["out"] = out.string();
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"seed", "preset", "image_size", "in_channels", "data", "test", "split",
                  "learners", "ensemble", "out", "threads", "command"},
                 "config");
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.preset = j.value("preset", c.preset);
    c.image_size = j.value("image_size", c.image_size);
    c.in_channels = j.value("in_channels", c.in_channels);
    if (j.contains("data")) c.data = source_from_json(j.at("data"), "data");
    if (j.contains("test")) c.test = source_from_json(j.at("test"), "test");
    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown(s, {"train_ratio", "test_fraction", "seed", "file"}, "split");
      c.split.train_ratio = s.value("train_ratio", c.split.train_ratio);
      c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
      if (s.contains("seed")) c.split.seed = s.at("seed").get<std::uint64_t>();
      if (s.contains("file")) c.split.file = s.at("file").get<std::string>();
    }
    if (j.contains("learners")) {
      reject_unknown(j.at("learners"), kLearners, "learners");
      for (const auto& [name, lj] : j.at("learners").items()) {
        if (!lj.is_object()) throw ConfigError("learners." + name + " must be an object");
        LearnerSettings l;
        json rest = lj;
        if (rest.contains("filter")) {
          l.filter = filter_from_string(rest.at("filter").get<std::string>());
          rest.erase("filter");
        }
        if (rest.contains("seed")) {
          l.seed = rest.at("seed").get<std::uint64_t>();
          rest.erase("seed");
        }
        try {
          l.train = train::train_config_from_json(rest);
        } catch (const train::TrainError& e) {
          throw ConfigError("learners." + name + ": " + e.what());
        }
        c.learners[name] = l;
      }
    }
    if (j.contains("ensemble")) {
      const auto& e = j.at("ensemble");
      reject_unknown(e, {"draws", "tune_fraction", "rf_grid", "svm_grid"}, "ensemble");
      c.ensemble.draws = e.value("draws", c.ensemble.draws);
      c.ensemble.tune_fraction = e.value("tune_fraction", c.ensemble.tune_fraction);
      try {
        if (e.contains("rf_grid")) c.ensemble.rf = ensemble::ForestGrid::from_json(e.at("rf_grid"));
        if (e.contains("svm_grid")) c.ensemble.svm = ensemble::SvmGrid::from_json(e.at("svm_grid"));
      } catch (const ensemble::EnsembleError& err) {
        throw ConfigError(std::string("ensemble: ") + err.what());
      }
    }
    c.out = j.value("out", c.out.string());
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = from_json(j);
  // Relative dataset paths are taken relative to the config file.
  const auto base = path.parent_path();
  const auto anchor = [&](std::filesystem::path& p) {
    if (p.is_relative()) p = base / p;
  };
  if (c.data) anchor(c.data->manifest);
  if (c.test) anchor(c.test->manifest);
  if (c.split.file) anchor(*c.split.file);
  return c;
}

}  // namespace vcead::cli
