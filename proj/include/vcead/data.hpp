#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vcead/tensor.hpp"

namespace vcead::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label { normal = 0, anomaly = 1, unlabeled = 2 };

std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

/// Channel-major float image with values in [0, 1].
struct Image {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, float fill = 0.f)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

struct Sample {
  Image image;
  Label label = Label::unlabeled;
  std::string patient_id;
  std::string source_class;
};

inline constexpr std::string_view kUnlabeledClass = "unlabeled";

/// Binary grouping of source classes. Rows whose class is in neither set are
/// excluded at load time; "unlabeled" always maps to Label::unlabeled.
struct ClassMap {
  std::string name;
  std::set<std::string> normal_classes;
  std::set<std::string> anomaly_classes;

  static ClassMap kvasir();
  static ClassMap galar();
  static ClassMap synthetic();
  /// kvasir | galar | synthetic
  static ClassMap by_name(std::string_view name);

  /// Throws DataError if the two sets overlap.
  void validate() const;
  std::optional<Label> map(std::string_view source_class) const;
};

// ---- image IO ----

/// PNG (8-bit, any colour type is converted to RGB) or binary/ASCII PPM.
Image read_image(const std::filesystem::path& path);
/// 8-bit PNG; 1 channel is written as grey, 3 as RGB.
void write_png(const std::filesystem::path& path, const Image& img);
void write_ppm(const std::filesystem::path& path, const Image& img);

// ---- manifests ----

struct ManifestRow {
  std::string path;
  std::string source_class;
  std::string patient_id;
};

struct ManifestLoad {
  std::vector<Sample> samples;
  std::size_t rows = 0;
  std::size_t excluded = 0;
  std::vector<std::size_t> excluded_lines;
};

/// CSV with header `path,source_class,patient_id`.
std::vector<ManifestRow> read_manifest_rows(const std::filesystem::path& manifest);
void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRow>& rows);

/// Image paths are resolved against the manifest's directory. When target is
/// set every image is resized to target x target.
ManifestLoad load_manifest(const std::filesystem::path& manifest, const ClassMap& classes,
                           std::optional<std::size_t> target = std::nullopt);

// ---- patient-wise splits ----

struct SplitSpec {
  std::set<std::string> train, val, test;
  std::uint64_t seed = 0;

  enum class Part { train, val, test, none };
  Part part_of(const std::string& patient_id) const;
  /// Throws DataError if any two sets share a patient.
  void validate() const;

  std::string to_json() const;
  static SplitSpec from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static SplitSpec load(const std::filesystem::path& path);
};

/// Shuffles the unique non-reserved patients and puts round(ratio * n) of
/// them into train, the rest into val. Reserved ids go to test.
SplitSpec patient_split(const std::vector<std::string>& patients, double ratio,
                        std::uint64_t seed, const std::vector<std::string>& reserved_test = {});

/// Samples whose patient belongs to `part`.
std::vector<Sample> select(const std::vector<Sample>& samples, const SplitSpec& split,
                           SplitSpec::Part part);

// ---- resampling and augmentation ----

/// Bilinear with half-pixel centres; output clamped to [0, 1].
Image resize(const Image& img, std::size_t height, std::size_t width);

Image hflip(const Image& img);
Image vflip(const Image& img);
/// Counter-clockwise rotation about the centre, bilinear, reflect padding.
Image rotate(const Image& img, double degrees);

struct EraseRect {
  std::size_t y = 0, x = 0, h = 0, w = 0;
  bool applied() const { return h > 0 && w > 0; }
};

struct EraseSettings {
  double min_area = 0.02, max_area = 0.2;
  double min_aspect = 0.3, max_aspect = 3.3;
  int attempts = 10;
};

/// Fills one random rectangle with `fill` (one value per channel). Returns an
/// empty rect when no draw fits after settings.attempts tries.
EraseRect random_erase(Image& img, std::span<const float> fill, std::mt19937_64& rng,
                       const EraseSettings& settings = {});

/// Per-transform application probabilities; 0 disables a transform.
struct AugmentPolicy {
  double rotate = 0.0, hflip = 0.0, vflip = 0.0, erase = 0.0;
  double max_degrees = 180.0;
  EraseSettings erase_settings;

  static AugmentPolicy none() { return {}; }
  static AugmentPolicy standard() { return {0.5, 0.5, 0.5, 0.5, 180.0, {}}; }
  bool any() const { return rotate > 0 || hflip > 0 || vflip > 0 || erase > 0; }
};

/// `fill` defaults to 0.5 per channel when empty.
Sample augment(const Sample& sample, const AugmentPolicy& policy, std::mt19937_64& rng,
               std::span<const float> fill = {});

/// Per-channel mean over all pixels of all samples.
std::vector<float> channel_means(const std::vector<Sample>& samples);

// ---- sampling ----

/// Index sampler with probability proportional to 1 / frequency of the
/// sample's class, with replacement.
class WeightedSampler {
 public:
  /// Labels must be 0/1 with both present.
  explicit WeightedSampler(const std::vector<int>& labels);
  std::size_t draw(std::mt19937_64& rng) const;
  std::vector<std::size_t> draw(std::size_t count, std::mt19937_64& rng) const;
  const std::vector<double>& probabilities() const { return probs_; }

 private:
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

// ---- batching ----

/// Stacks the selected images into an N x C x H x W tensor.
template <typename T>
Tensor<T> make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

// ---- synthetic data ----

struct SynthConfig {
  std::size_t n_normal = 0, n_anomaly = 0;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  std::string patient_prefix = "p";
  std::size_t patient_offset = 0;
  std::size_t group_size = 25;  // samples per patient, at least 20
};

/// Pink low-frequency textures; anomalies add 1-3 dark-red blobs or bright
/// specular patches. Order is shuffled and patients own consecutive runs.
std::vector<Sample> synth_dataset(const SynthConfig& cfg);

/// Writes images/NNNNN.png plus manifest.csv into dir.
std::vector<ManifestRow> write_dataset(const std::filesystem::path& dir,
                                       const std::vector<Sample>& samples);

}  // namespace vcead::data
