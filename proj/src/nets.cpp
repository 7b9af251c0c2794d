#include "vcead/nets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "vcead/ops.hpp"

namespace vcead::nets {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::hardswish: return "hardswish";
  }
  return "none";
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "hardswish") return Activation::hardswish;
  if (s == "none") return Activation::none;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::classifier: return "clf";
    case LearnerKind::autoencoder: return "ae";
    case LearnerKind::semi_supervised: return "semi";
  }
  return "clf";
}

LearnerKind learner_from_string(std::string_view s) {
  if (s == "clf") return LearnerKind::classifier;
  if (s == "ae") return LearnerKind::autoencoder;
  if (s == "semi") return LearnerKind::semi_supervised;
  throw std::invalid_argument("unknown learner '" + std::string(s) + "' (expected clf|ae|semi)");
}

namespace {

using A = Activation;

std::vector<EncoderPreset> make_presets() {
  std::vector<EncoderPreset> out;
  out.push_back({"desk_identity", {8, 3, 1, A::relu}, {{1.0, 8, 3, 1, false, A::relu}}, 8, 32});
  out.push_back({"desk_tiny",
                 {16, 3, 1, A::hardswish},
                 {{1.0, 16, 3, 2, true, A::relu},
                  {4.0, 24, 3, 2, false, A::relu},
                  {4.0, 32, 3, 2, true, A::hardswish}},
                 32,
                 32});
  out.push_back({"desk_small",
                 {16, 3, 2, A::hardswish},
                 {{1.0, 16, 3, 2, true, A::relu},
                  {4.5, 24, 3, 2, false, A::relu},
                  {88.0 / 24.0, 24, 3, 1, false, A::relu},
                  {4.0, 40, 5, 2, true, A::hardswish},
                  {6.0, 40, 5, 1, true, A::hardswish}},
                 96,
                 64});
  // MobileNetV3-Small stage table (exp/in ratios), width multiplier 1.0.
  out.push_back({"mobilenet_small_full",
                 {16, 3, 2, A::hardswish},
                 {{1.0, 16, 3, 2, true, A::relu},
                  {4.5, 24, 3, 2, false, A::relu},
                  {88.0 / 24.0, 24, 3, 1, false, A::relu},
                  {4.0, 40, 5, 2, true, A::hardswish},
                  {6.0, 40, 5, 1, true, A::hardswish},
                  {6.0, 40, 5, 1, true, A::hardswish},
                  {3.0, 48, 5, 1, true, A::hardswish},
                  {3.0, 48, 5, 1, true, A::hardswish},
                  {6.0, 96, 5, 2, true, A::hardswish},
                  {6.0, 96, 5, 1, true, A::hardswish},
                  {6.0, 96, 5, 1, true, A::hardswish}},
                 576,
                 224});
  // Same widths with 3x3 kernels, no SE and relu throughout.
  EncoderPreset minimal = out.back();
  minimal.name = "mobilenet_small_min";
  minimal.stem.activation = A::relu;
  for (auto& b : minimal.blocks) {
    b.kernel = 3;
    b.use_squeeze_excite = false;
    b.activation = A::relu;
  }
  out.push_back(minimal);
  return out;
}

const std::vector<EncoderPreset>& presets() {
  static const std::vector<EncoderPreset> all = [] {
    auto p = make_presets();
    for (const auto& e : p) validate(e);
    return p;
  }();
  return all;
}

template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(nd(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> ud(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(ud(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
void push(ParameterList<T>& out, const std::string& prefix, const char* name,
          const Tensor<T>& t) {
  if (t.defined()) out.push_back({prefix + "." + name, t});
}

template <typename T>
class Conv final : public Layer<T> {
 public:
  Conv(std::size_t in, std::size_t out, std::size_t kernel, int stride, bool depthwise,
       bool bias, std::mt19937_64& rng)
      : depthwise_(depthwise), params_{stride, static_cast<int>(kernel / 2)} {
    if (depthwise) {
      weight_ = he_normal<T>({in, 1, kernel, kernel}, kernel * kernel, rng);
    } else {
      weight_ = he_normal<T>({out, in, kernel, kernel}, in * kernel * kernel, rng);
    }
    if (bias) bias_ = Tensor<T>::zeros({depthwise ? in : out}, true);
  }
  Tensor<T> forward(const Tensor<T>& x) const override {
    return depthwise_ ? ops::depthwise_conv2d(x, weight_, bias_, params_)
                      : ops::conv2d(x, weight_, bias_, params_);
  }
  void collect(ParameterList<T>& out, const std::string& prefix) const override {
    push(out, prefix, "weight", weight_);
    push(out, prefix, "bias", bias_);
  }

 private:
  bool depthwise_;
  ops::ConvParams params_;
  Tensor<T> weight_, bias_;
};

template <typename T>
class BatchNormAffine final : public Layer<T> {
 public:
  explicit BatchNormAffine(std::size_t channels)
      : scale_(Tensor<T>::full({channels}, T(1), true)),
        shift_(Tensor<T>::zeros({channels}, true)) {}
  Tensor<T> forward(const Tensor<T>& x) const override {
    return ops::batchnorm_affine(x, scale_, shift_);
  }
  void collect(ParameterList<T>& out, const std::string& prefix) const override {
    push(out, prefix, "scale", scale_);
    push(out, prefix, "shift", shift_);
  }

 private:
  Tensor<T> scale_, shift_;
};

template <typename T>
class Act final : public Layer<T> {
 public:
  explicit Act(Activation a) : a_(a) {}
  Tensor<T> forward(const Tensor<T>& x) const override {
    switch (a_) {
      case Activation::relu: return ops::relu(x);
      case Activation::hardswish: return ops::hardswish(x);
      case Activation::none: break;
    }
    return x;
  }
  void collect(ParameterList<T>&, const std::string&) const override {}

 private:
  Activation a_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override { return ops::sigmoid(x); }
  void collect(ParameterList<T>&, const std::string&) const override {}
};

template <typename T>
class GlobalPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override { return ops::global_avg_pool(x); }
  void collect(ParameterList<T>&, const std::string&) const override {}
};

template <typename T>
class Upsample final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) const override { return ops::upsample_nearest(x, 2); }
  void collect(ParameterList<T>&, const std::string&) const override {}
};

template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight_(uniform_fan_in<T>({out, in}, in, rng)),
        bias_(Tensor<T>::zeros({out}, true)) {}
  Tensor<T> forward(const Tensor<T>& x) const override {
    return ops::dense(x, weight_, bias_);
  }
  void collect(ParameterList<T>& out, const std::string& prefix) const override {
    push(out, prefix, "weight", weight_);
    push(out, prefix, "bias", bias_);
  }

 private:
  Tensor<T> weight_, bias_;
};

template <typename T>
class SqueezeExcite final : public Layer<T> {
 public:
  SqueezeExcite(std::size_t channels, std::mt19937_64& rng)
      : reduce_(channels, squeeze_channels(channels), rng),
        expand_(squeeze_channels(channels), channels, rng) {}
  Tensor<T> forward(const Tensor<T>& x) const override {
    auto gate = ops::global_avg_pool(x);
    gate = ops::sigmoid(expand_.forward(ops::relu(reduce_.forward(gate))));
    return ops::channel_scale(x, gate);
  }
  void collect(ParameterList<T>& out, const std::string& prefix) const override {
    reduce_.collect(out, prefix + ".reduce");
    expand_.collect(out, prefix + ".expand");
  }

 private:
  Dense<T> reduce_, expand_;
};

template <typename T>
LayerPtr<T> conv_bn_act(std::size_t in, std::size_t out, std::size_t kernel, int stride,
                        bool depthwise, Activation act, std::mt19937_64& rng) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->add("conv", std::make_unique<Conv<T>>(in, out, kernel, stride, depthwise, false, rng));
  seq->add("bn", std::make_unique<BatchNormAffine<T>>(depthwise ? in : out));
  if (act != Activation::none) seq->add("act", std::make_unique<Act<T>>(act));
  return seq;
}

// Feature widths per resolution level of the encoder. Level 0 is the input
// resolution and always reports the stem width.
std::vector<std::size_t> level_widths(const EncoderPreset& p) {
  std::vector<std::size_t> levels{p.stem.out_channels};
  if (p.stem.stride == 2) levels.push_back(p.stem.out_channels);
  for (const auto& b : p.blocks) {
    if (b.stride == 2) levels.push_back(b.out_channels);
    if (levels.size() > 1) levels.back() = b.out_channels;
  }
  if (levels.size() > 1) levels.back() = p.latent_channels;
  return levels;
}

}  // namespace

const EncoderPreset& preset(std::string_view name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  std::string known;
  for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw std::invalid_argument("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : presets()) names.push_back(p.name);
  return names;
}

void validate(const EncoderPreset& p) {
  auto bad = [&](const std::string& what) {
    throw std::invalid_argument("preset '" + p.name + "': " + what);
  };
  if (p.stem.stride != 1 && p.stem.stride != 2) bad("stem stride must be 1 or 2");
  if (p.stem.out_channels < 1 || p.stem.kernel < 1) bad("stem must have positive extents");
  if (p.blocks.empty()) bad("no blocks");
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    const std::string at = "block " + std::to_string(i) + ": ";
    if (b.stride != 1 && b.stride != 2) bad(at + "stride must be 1 or 2");
    if (!(b.expansion_ratio >= 1.0)) bad(at + "expansion ratio must be >= 1");
    if (b.out_channels < 1) bad(at + "out_channels must be >= 1");
    if (b.kernel < 1 || b.kernel % 2 == 0) bad(at + "kernel must be odd");
  }
  if (p.latent_channels < 1) bad("latent_channels must be >= 1");
}

std::size_t total_stride(const EncoderPreset& p) {
  std::size_t s = static_cast<std::size_t>(p.stem.stride);
  for (const auto& b : p.blocks) s *= static_cast<std::size_t>(b.stride);
  return s;
}

std::size_t expanded_channels(std::size_t in_channels, double ratio) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(in_channels) * ratio));
}

std::size_t squeeze_channels(std::size_t channels) {
  const std::size_t v = channels / 4;
  std::size_t d = std::max<std::size_t>(8, (v + 4) / 8 * 8);
  if (static_cast<double>(d) < 0.9 * static_cast<double>(v)) d += 8;
  return d;
}

template <typename T>
Sequential<T>& Sequential<T>::add(std::string name, LayerPtr<T> layer) {
  children_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = x;
  for (const auto& [name, layer] : children_) h = layer->forward(h);
  return h;
}

template <typename T>
void Sequential<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  for (const auto& [name, layer] : children_)
    layer->collect(out, prefix.empty() ? name : prefix + "." + name);
}

template <typename T>
InvertedResidual<T>::InvertedResidual(std::size_t in_channels, const BlockSpec& spec,
                                      std::mt19937_64& rng)
    : residual_(spec.stride == 1 && in_channels == spec.out_channels) {
  const std::size_t mid = expanded_channels(in_channels, spec.expansion_ratio);
  if (mid != in_channels) {
    body_.add("expand", conv_bn_act<T>(in_channels, mid, 1, 1, false, spec.activation, rng));
  }
  body_.add("depthwise",
            conv_bn_act<T>(mid, mid, spec.kernel, spec.stride, true, spec.activation, rng));
  if (spec.use_squeeze_excite) body_.add("se", std::make_unique<SqueezeExcite<T>>(mid, rng));
  body_.add("project",
            conv_bn_act<T>(mid, spec.out_channels, 1, 1, false, Activation::none, rng));
}

template <typename T>
Tensor<T> InvertedResidual<T>::forward(const Tensor<T>& x) const {
  auto y = body_.forward(x);
  return residual_ ? ops::add(x, y) : y;
}

template <typename T>
void InvertedResidual<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  body_.collect(out, prefix);
}

template <typename T>
Encoder<T>::Encoder(const EncoderPreset& p, std::size_t in_channels, std::mt19937_64& rng)
    : in_channels_(in_channels), latent_channels_(p.latent_channels),
      total_stride_(nets::total_stride(p)) {
  validate(p);
  if (in_channels < 1) throw std::invalid_argument("encoder: in_channels must be >= 1");
  net_.add("stem", conv_bn_act<T>(in_channels, p.stem.out_channels, p.stem.kernel,
                                  p.stem.stride, false, p.stem.activation, rng));
  std::size_t width = p.stem.out_channels;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    net_.add("blocks." + std::to_string(i),
             std::make_unique<InvertedResidual<T>>(width, p.blocks[i], rng));
    width = p.blocks[i].out_channels;
  }
  if (width != p.latent_channels) {
    net_.add("head", conv_bn_act<T>(width, p.latent_channels, 1, 1, false,
                                    p.blocks.back().activation, rng));
  }
}

template <typename T>
Tensor<T> Encoder<T>::forward(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != in_channels_) {
    throw ShapeError("encoder: expected N x " + std::to_string(in_channels_) +
                     " x H x W input, got " + shape_str(images.shape()));
  }
  const std::size_t h = images.dim(2), w = images.dim(3);
  if (h == 0 || w == 0 || h % total_stride_ != 0 || w % total_stride_ != 0) {
    throw ShapeError("encoder: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be divisible by total stride " + std::to_string(total_stride_));
  }
  return net_.forward(images);
}

template <typename T>
void Encoder<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  net_.collect(out, prefix);
}

template <typename T>
Decoder<T>::Decoder(const EncoderPreset& p, std::size_t out_channels, std::mt19937_64& rng)
    : latent_channels_(p.latent_channels) {
  validate(p);
  const auto levels = level_widths(p);
  std::size_t width = levels.back();
  for (std::size_t s = 0; s + 1 < levels.size(); ++s) {
    const std::size_t target = levels[levels.size() - 2 - s];
    auto stage = std::make_unique<Sequential<T>>();
    stage->add("upsample", std::make_unique<Upsample<T>>());
    stage->add("depthwise", conv_bn_act<T>(width, width, 3, 1, true, Activation::relu, rng));
    stage->add("pointwise", conv_bn_act<T>(width, target, 1, 1, false, Activation::relu, rng));
    net_.add("stages." + std::to_string(s), std::move(stage));
    width = target;
  }
  net_.add("out", std::make_unique<Conv<T>>(width, out_channels, 1, 1, false, true, rng));
  net_.add("sigmoid", std::make_unique<Sigmoid<T>>());
}

template <typename T>
Tensor<T> Decoder<T>::forward(const Tensor<T>& latent) const {
  if (latent.rank() != 4 || latent.dim(1) != latent_channels_) {
    throw ShapeError("decoder: expected N x " + std::to_string(latent_channels_) +
                     " x h x w latent, got " + shape_str(latent.shape()));
  }
  return net_.forward(latent);
}

template <typename T>
void Decoder<T>::collect(ParameterList<T>& out, const std::string& prefix) const {
  net_.collect(out, prefix);
}

template <typename T>
Sequential<T> build_classifier_head(std::size_t latent_channels, std::mt19937_64& rng) {
  Sequential<T> head;
  head.add("pool", std::make_unique<GlobalPool<T>>());
  head.add("fc", std::make_unique<Dense<T>>(latent_channels, 2, rng));
  return head;
}

template <typename T>
Sequential<T> build_semi_head(std::size_t latent_channels, std::mt19937_64& rng) {
  Sequential<T> head;
  head.add("pool", std::make_unique<GlobalPool<T>>());
  head.add("fc1", std::make_unique<Dense<T>>(latent_channels, kSemiHiddenUnits, rng));
  head.add("act", std::make_unique<Act<T>>(Activation::relu));
  head.add("fc2", std::make_unique<Dense<T>>(kSemiHiddenUnits, 2, rng));
  return head;
}

template <typename T>
ParameterList<T> Learner<T>::parameters() const {
  ParameterList<T> out;
  encoder.collect(out, "encoder");
  if (decoder) decoder->collect(out, "decoder");
  if (head) head->collect(out, "head");
  return out;
}

template <typename T>
Learner<T> make_learner(LearnerKind kind, const std::string& preset_name,
                        std::size_t in_channels, std::size_t image_size, std::uint64_t seed) {
  const EncoderPreset& p = preset(preset_name);
  if (image_size == 0 || image_size % total_stride(p) != 0) {
    throw std::invalid_argument("image size " + std::to_string(image_size) +
                                " must be a positive multiple of " +
                                std::to_string(total_stride(p)) + " for preset " + p.name);
  }
  std::mt19937_64 rng(seed);
  Learner<T> learner{kind, preset_name, in_channels, image_size, Encoder<T>(p, in_channels, rng),
                     std::nullopt, std::nullopt};
  if (kind != LearnerKind::classifier) learner.decoder.emplace(p, in_channels, rng);
  if (kind == LearnerKind::classifier) learner.head.emplace(build_classifier_head<T>(p.latent_channels, rng));
  if (kind == LearnerKind::semi_supervised) learner.head.emplace(build_semi_head<T>(p.latent_channels, rng));
  return learner;
}

template <typename T>
ModelBundle<T> make_bundle(Learner<T> classifier, Learner<T> autoencoder, Learner<T> semi) {
  if (classifier.kind != LearnerKind::classifier || autoencoder.kind != LearnerKind::autoencoder ||
      semi.kind != LearnerKind::semi_supervised) {
    throw std::invalid_argument("bundle: learners must be (clf, ae, semi) in that order");
  }
  if (classifier.preset_name != autoencoder.preset_name ||
      classifier.preset_name != semi.preset_name) {
    throw std::invalid_argument("bundle: learners use different presets (" +
                                classifier.preset_name + ", " + autoencoder.preset_name +
                                ", " + semi.preset_name + ")");
  }
  if (classifier.image_size != autoencoder.image_size || classifier.image_size != semi.image_size ||
      classifier.in_channels != autoencoder.in_channels || classifier.in_channels != semi.in_channels) {
    throw std::invalid_argument("bundle: learners expect different input shapes");
  }
  std::string name = classifier.preset_name;
  return ModelBundle<T>{std::move(name), std::move(classifier), std::move(autoencoder),
                        std::move(semi)};
}

namespace {
template <typename T>
void require_kind(const Learner<T>& l, LearnerKind k, const char* what) {
  if (l.kind != k) {
    throw std::invalid_argument(std::string(what) + ": learner is '" +
                                std::string(to_string(l.kind)) + "'");
  }
}
}  // namespace

template <typename T>
Tensor<T> classifier_forward(const Learner<T>& clf, const Tensor<T>& images) {
  require_kind(clf, LearnerKind::classifier, "classifier_forward");
  return clf.head->forward(clf.encoder.forward(images));
}

template <typename T>
Tensor<T> ae_forward(const Learner<T>& ae, const Tensor<T>& images) {
  if (!ae.decoder) throw std::invalid_argument("ae_forward: learner has no decoder");
  return ae.decoder->forward(ae.encoder.forward(images));
}

template <typename T>
SemiOutputs<T> semi_forward(const Learner<T>& semi, const Tensor<T>& images) {
  require_kind(semi, LearnerKind::semi_supervised, "semi_forward");
  auto latent = semi.encoder.forward(images);
  return {semi.decoder->forward(latent), semi.head->forward(latent)};
}

template <typename T>
std::size_t count_parameters(const ParameterList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

template <typename T>
std::size_t count_parameters(const Layer<T>& layer) {
  ParameterList<T> params;
  layer.collect(params, "");
  return count_parameters(params);
}

template <typename T>
std::vector<std::pair<std::string, std::size_t>> layer_parameter_counts(
    const ParameterList<T>& params) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const auto& p : params) {
    const auto dot = p.name.rfind('.');
    std::string layer = dot == std::string::npos ? p.name : p.name.substr(0, dot);
    if (out.empty() || out.back().first != layer) out.emplace_back(layer, 0);
    out.back().second += p.tensor.numel();
  }
  return out;
}

#define VCEAD_INSTANTIATE_NETS(T)                                                          \
  template class Sequential<T>;                                                            \
  template class InvertedResidual<T>;                                                      \
  template class Encoder<T>;                                                               \
  template class Decoder<T>;                                                               \
  template struct Learner<T>;                                                              \
  template Sequential<T> build_classifier_head<T>(std::size_t, std::mt19937_64&);          \
  template Sequential<T> build_semi_head<T>(std::size_t, std::mt19937_64&);                \
  template Learner<T> make_learner<T>(LearnerKind, const std::string&, std::size_t,        \
                                      std::size_t, std::uint64_t);                         \
  template ModelBundle<T> make_bundle(Learner<T>, Learner<T>, Learner<T>);                 \
  template Tensor<T> classifier_forward(const Learner<T>&, const Tensor<T>&);              \
  template Tensor<T> ae_forward(const Learner<T>&, const Tensor<T>&);                      \
  template SemiOutputs<T> semi_forward(const Learner<T>&, const Tensor<T>&);               \
  template std::size_t count_parameters(const ParameterList<T>&);                          \
  template std::size_t count_parameters(const Layer<T>&);                                  \
  template std::vector<std::pair<std::string, std::size_t>> layer_parameter_counts(        \
      const ParameterList<T>&);

VCEAD_INSTANTIATE_NETS(float)
VCEAD_INSTANTIATE_NETS(double)

}  // namespace vcead::nets
