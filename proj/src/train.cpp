#include "vcead/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "vcead/metrics.hpp"
#include "vcead/ops.hpp"

namespace vcead::train {

using data::Label;
using data::Sample;
using nets::Learner;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw TrainError("config: epochs must be >= 1");
  if (batch_size < 1) throw TrainError("config: batch_size must be >= 1");
  if (eval_batch < 1) throw TrainError("config: eval_batch must be >= 1");
  if (!(adam.lr >= 0)) throw TrainError("config: lr must be >= 0");
  if (precision != "f32" && precision != "f64")
    throw TrainError("config: precision must be f32 or f64");
  if (!(lambda >= 0)) throw TrainError("config: lambda must be >= 0");
  for (double p : {augment.rotate, augment.hflip, augment.vflip, augment.erase})
    if (!(p >= 0 && p <= 1)) throw TrainError("config: augmentation probabilities must be in [0, 1]");
}

json to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["eps"] = c.adam.eps;
  j["weight_decay"] = c.adam.weight_decay;
  j["precision"] = c.precision;
  j["seed"] = c.seed;
  j["augment"] = {{"rotate", c.augment.rotate},
                  {"hflip", c.augment.hflip},
                  {"vflip", c.augment.vflip},
                  {"erase", c.augment.erase},
                  {"max_degrees", c.augment.max_degrees}};
  if (c.sampler)
    j["sampler"] = *c.sampler == SamplerKind::weighted ? "weighted" : "uniform";
  else
    j["sampler"] = nullptr;
  j["lambda"] = c.lambda;
  j["eval_batch"] = c.eval_batch;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  static const std::vector<std::string> known{
      "epochs", "batch_size", "lr",   "beta1",  "beta2",     "eps",       "weight_decay",
      "precision", "seed",    "augment", "sampler", "lambda", "eval_batch"};
  if (!j.is_object()) throw TrainError("train config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw TrainError("train config: unknown key '" + key + "'");
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
    c.precision = j.value("precision", c.precision);
    c.seed = j.value("seed", c.seed);
    c.lambda = j.value("lambda", c.lambda);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    if (j.contains("augment")) {
      const auto& a = j.at("augment");
      if (a.is_string()) {
        const auto name = a.get<std::string>();
        if (name == "none")
          c.augment = data::AugmentPolicy::none();
        else if (name == "standard")
          c.augment = data::AugmentPolicy::standard();
        else
          throw TrainError("train config: augment must be none, standard or an object");
      } else {
        c.augment.rotate = a.value("rotate", c.augment.rotate);
        c.augment.hflip = a.value("hflip", c.augment.hflip);
        c.augment.vflip = a.value("vflip", c.augment.vflip);
        c.augment.erase = a.value("erase", c.augment.erase);
        c.augment.max_degrees = a.value("max_degrees", c.augment.max_degrees);
      }
    }
    if (j.contains("sampler") && !j.at("sampler").is_null()) {
      const auto s = j.at("sampler").get<std::string>();
      if (s == "weighted")
        c.sampler = SamplerKind::weighted;
      else if (s == "uniform")
        c.sampler = SamplerKind::uniform;
      else
        throw TrainError("train config: sampler must be weighted or uniform");
    }
  } catch (const json::exception& e) {
    throw TrainError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<double> TrainReport::losses() const {
  std::vector<double> out;
  for (const auto& e : epochs) out.push_back(e.train_loss);
  return out;
}

json TrainReport::to_json() const {
  json j;
  j["learner"] = learner;
  j["train_samples"] = train_samples;
  j["train_loss"] = losses();
  j["epochs"] = json::array();
  for (const auto& e : epochs) {
    json r{{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    r["val_loss"] = e.val_loss ? json(*e.val_loss) : json(nullptr);
    r["val_auc"] = e.val_auc ? json(*e.val_auc) : json(nullptr);
    j["epochs"].push_back(r);
  }
  j["wall_seconds"] = wall_seconds;
  j["checkpoint"] = checkpoint;
  return j;
}

std::vector<Sample> autoencoder_inputs(const std::vector<Sample>& samples) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (s.label != Label::anomaly) out.push_back(s);
  return out;
}

double anomaly_probability(const std::array<double, 2>& z) {
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  return e1 / (e0 + e1);
}

namespace {

template <typename T>
Tensor<T> label_tensor(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<T> y;
  for (auto i : idx) y.push_back(samples[i].label == Label::anomaly ? T(1) : T(0));
  return Tensor<T>({idx.size()}, std::move(y));
}

std::vector<int> binary_labels(const std::vector<Sample>& samples) {
  std::vector<int> out;
  for (const auto& s : samples) out.push_back(s.label == Label::anomaly ? 1 : 0);
  return out;
}

std::vector<Sample> labeled_only(const std::vector<Sample>& samples) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (s.label != Label::unlabeled) out.push_back(s);
  return out;
}

std::optional<double> auc_if_defined(const std::vector<double>& scores,
                                      const std::vector<Sample>& samples) {
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label == Label::unlabeled) continue;
    s.push_back(scores[i]);
    y.push_back(samples[i].label == Label::anomaly);
  }
  if (std::count(y.begin(), y.end(), 1) == 0 || std::count(y.begin(), y.end(), 0) == 0)
    return std::nullopt;
  return metrics::auc(s, y);
}

double mean_ce(const std::vector<double>& probs, const std::vector<Sample>& samples) {
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].label == Label::unlabeled) continue;
    const double p = std::clamp(probs[i], ops::kProbabilityClamp, 1.0 - ops::kProbabilityClamp);
    acc -= samples[i].label == Label::anomaly ? std::log(p) : std::log(1 - p);
    ++n;
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

struct ValResult {
  std::optional<double> loss, auc;
};

// Shared epoch loop. `batch_loss` builds the scalar objective for one batch
// from the augmented images and the indices into `set`.
template <typename T, typename LossFn, typename ValFn>
TrainReport run_epochs(Learner<T>& learner, const std::vector<Sample>& set, SamplerKind sampler,
                       const TrainConfig& cfg, const std::string& name, LossFn batch_loss,
                       ValFn validate) {
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<data::WeightedSampler> weighted;
  if (sampler == SamplerKind::weighted) {
    for (const auto& s : set)
      if (s.label == Label::unlabeled)
        throw TrainError(name + ": weighted sampling needs every sample labeled");
    try {
      weighted.emplace(binary_labels(set));
    } catch (const data::DataError& e) {
      throw TrainError(name + ": " + e.what());
    }
  }
  const auto fill = data::channel_means(set);
  Adam<T> opt(learner.parameters(), cfg.adam);
  Graph<T>::active().clear();

  TrainReport report;
  report.learner = name;
  report.train_samples = set.size();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0xE90C}};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order;
    if (weighted) {
      order = weighted->draw(set.size(), rng);
    } else {
      order.resize(set.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
    }
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<Sample> batch;
      batch.reserve(idx.size());
      for (auto i : idx) batch.push_back(data::augment(set[i], cfg.augment, rng, fill));
      std::vector<std::size_t> local(idx.size());
      std::iota(local.begin(), local.end(), 0);
      const auto images = data::make_batch<T>(batch, local);

      opt.zero_grad();
      auto loss = batch_loss(images, idx);
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value))
        throw TrainError(name + ": loss became non-finite at epoch " + std::to_string(epoch));
      backward(loss);
      opt.step();
      loss_sum += value * static_cast<double>(idx.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(set.size());
    const ValResult v = validate();
    rec.val_loss = v.loss;
    rec.val_auc = v.auc;
    report.epochs.push_back(rec);
  }
  learner.trained = true;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

template <typename T>
void require_kind(const Learner<T>& l, nets::LearnerKind k, const std::string& what) {
  if (l.kind != k)
    throw TrainError(what + ": learner is '" + std::string(nets::to_string(l.kind)) + "'");
}

}  // namespace

// ---- inference ----

template <typename T>
std::vector<std::array<double, 2>> classifier_logits(const Learner<T>& clf,
                                                     const std::vector<Sample>& samples,
                                                     std::size_t batch) {
  NoGradGuard guard;
  std::vector<std::array<double, 2>> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor<T> logits = nets::classifier_forward(clf, data::make_batch<T>(samples, idx));
    const auto z = logits.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.push_back({static_cast<double>(z[2 * i]), static_cast<double>(z[2 * i + 1])});
  }
  return out;
}

template <typename T>
std::vector<double> reconstruction_errors(const Learner<T>& learner,
                                          const std::vector<Sample>& samples, std::size_t batch) {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto x = data::make_batch<T>(samples, idx);
    const auto rec = nets::ae_forward(learner, x);
    const std::size_t per = x.numel() / idx.size();
    const auto a = x.data(), b = rec.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double acc = 0;
      for (std::size_t k = i * per; k < (i + 1) * per; ++k) {
        const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
        acc += d * d;
      }
      out.push_back(acc / static_cast<double>(per));
    }
  }
  return out;
}

template <typename T>
std::vector<std::array<double, 2>> semi_logits(const Learner<T>& semi,
                                               const std::vector<Sample>& samples,
                                               std::size_t batch) {
  NoGradGuard guard;
  std::vector<std::array<double, 2>> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto x = data::make_batch<T>(samples, idx);
    const Tensor<T> logits = semi.head->forward(semi.encoder.forward(x));
    const auto z = logits.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      out.push_back({static_cast<double>(z[2 * i]), static_cast<double>(z[2 * i + 1])});
  }
  return out;
}

// ---- trainers ----

template <typename T>
TrainReport train_classifier(Learner<T>& clf, const std::vector<Sample>& train,
                             const std::vector<Sample>& val, const TrainConfig& cfg) {
  cfg.validate();
  require_kind(clf, nets::LearnerKind::classifier, "train_classifier");
  const auto set = labeled_only(train);
  const auto n_anom = std::count_if(set.begin(), set.end(),
                                    [](const Sample& s) { return s.label == Label::anomaly; });
  if (n_anom == 0) throw TrainError("train_classifier: no labeled anomalies in the training set");
  if (static_cast<std::size_t>(n_anom) == set.size())
    throw TrainError("train_classifier: no labeled normal samples in the training set");
  const auto val_set = labeled_only(val);

  auto loss_fn = [&](const Tensor<T>& images, const std::vector<std::size_t>& idx) {
    const auto logits = nets::classifier_forward(clf, images);
    return ops::ce_loss(label_tensor<T>(set, idx), ops::select_column(ops::softmax(logits), 1));
  };
  auto val_fn = [&]() -> ValResult {
    if (val_set.empty()) return {};
    std::vector<double> p;
    for (const auto& z : classifier_logits(clf, val_set, cfg.eval_batch))
      p.push_back(anomaly_probability(z));
    return {mean_ce(p, val_set), auc_if_defined(p, val_set)};
  };
  return run_epochs(clf, set, cfg.sampler.value_or(SamplerKind::weighted), cfg, "clf", loss_fn,
                    val_fn);
}

template <typename T>
TrainReport train_autoencoder(Learner<T>& ae, const std::vector<Sample>& train,
                              const std::vector<Sample>& val, const TrainConfig& cfg) {
  cfg.validate();
  require_kind(ae, nets::LearnerKind::autoencoder, "train_autoencoder");
  if (train.empty()) throw TrainError("train_autoencoder: empty training set");
  const auto n_anom = std::count_if(train.begin(), train.end(),
                                    [](const Sample& s) { return s.label == Label::anomaly; });
  if (n_anom > 0)
    throw TrainError("train_autoencoder: " + std::to_string(n_anom) +
                     " anomaly samples in the input; only normal or unlabeled samples are allowed");

  auto loss_fn = [&](const Tensor<T>& images, const std::vector<std::size_t>&) {
    return ops::mse_loss(images, nets::ae_forward(ae, images));
  };
  auto val_fn = [&]() -> ValResult {
    if (val.empty()) return {};
    const auto err = reconstruction_errors(ae, val, cfg.eval_batch);
    double acc = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < val.size(); ++i)
      if (val[i].label != Label::anomaly) acc += err[i], ++n;
    ValResult r;
    if (n) r.loss = acc / static_cast<double>(n);
    r.auc = auc_if_defined(err, val);
    return r;
  };
  return run_epochs(ae, train, cfg.sampler.value_or(SamplerKind::uniform), cfg, "ae", loss_fn,
                    val_fn);
}

template <typename T>
TrainReport train_semi(Learner<T>& semi, const std::vector<Sample>& train,
                       const std::vector<Sample>& val, const TrainConfig& cfg) {
  cfg.validate();
  require_kind(semi, nets::LearnerKind::semi_supervised, "train_semi");
  if (std::none_of(train.begin(), train.end(),
                   [](const Sample& s) { return s.label != Label::unlabeled; }))
    throw TrainError("train_semi: no labeled samples, the head cannot be trained");

  auto loss_fn = [&](const Tensor<T>& images, const std::vector<std::size_t>& idx) {
    const auto latent = semi.encoder.forward(images);
    auto loss = ops::mse_loss(images, semi.decoder->forward(latent));
    if (cfg.lambda == 0.0) return loss;
    std::vector<std::size_t> rows, labeled;
    for (std::size_t r = 0; r < idx.size(); ++r)
      if (train[idx[r]].label != Label::unlabeled) rows.push_back(r), labeled.push_back(idx[r]);
    if (rows.empty()) return loss;
    const auto logits = ops::gather_rows(semi.head->forward(latent), rows);
    const auto ce = ops::ce_loss(label_tensor<T>(train, labeled),
                                 ops::select_column(ops::softmax(logits), 1));
    return ops::add(loss, ops::scale(ce, static_cast<T>(cfg.lambda)));
  };
  auto val_fn = [&]() -> ValResult {
    if (val.empty()) return {};
    const auto err = reconstruction_errors(semi, val, cfg.eval_batch);
    std::vector<double> p;
    for (const auto& z : semi_logits(semi, val, cfg.eval_batch)) p.push_back(anomaly_probability(z));
    const double mse = std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
    return {mse + cfg.lambda * mean_ce(p, val), auc_if_defined(p, val)};
  };
  return run_epochs(semi, train, cfg.sampler.value_or(SamplerKind::uniform), cfg, "semi", loss_fn,
                    val_fn);
}

#define VCEAD_INSTANTIATE_TRAIN(T)                                                              \
  template TrainReport train_classifier(Learner<T>&, const std::vector<Sample>&,                \
                                        const std::vector<Sample>&, const TrainConfig&);        \
  template TrainReport train_autoencoder(Learner<T>&, const std::vector<Sample>&,               \
                                         const std::vector<Sample>&, const TrainConfig&);       \
  template TrainReport train_semi(Learner<T>&, const std::vector<Sample>&,                      \
                                  const std::vector<Sample>&, const TrainConfig&);              \
  template std::vector<std::array<double, 2>> classifier_logits(                                \
      const Learner<T>&, const std::vector<Sample>&, std::size_t);                              \
  template std::vector<double> reconstruction_errors(const Learner<T>&,                         \
                                                     const std::vector<Sample>&, std::size_t);  \
  template std::vector<std::array<double, 2>> semi_logits(const Learner<T>&,                    \
                                                          const std::vector<Sample>&, std::size_t);

VCEAD_INSTANTIATE_TRAIN(float)
VCEAD_INSTANTIATE_TRAIN(double)

}  // namespace vcead::train
