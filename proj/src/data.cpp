#include "vcead/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <sstream>

namespace vcead::data {

namespace fs = std::filesystem;

std::string_view to_string(Label l) {
  switch (l) {
    case Label::normal: return "normal";
    case Label::anomaly: return "anomaly";
    case Label::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Label label_from_string(std::string_view s) {
  if (s == "normal") return Label::normal;
  if (s == "anomaly") return Label::anomaly;
  if (s == "unlabeled") return Label::unlabeled;
  throw DataError("unknown label '" + std::string(s) + "'");
}

ClassMap ClassMap::kvasir() {
  return {"kvasir",
          {"Pylorus", "Reduced Mucosal View", "Ileo-cecal valve", "Normal Clean Mucosa"},
          {"Angiectasia", "Blood-fresh", "Foreign Bodies", "Ulcer", "Erosion",
           "Lymphangiectasia"}};
}

ClassMap ClassMap::galar() {
  return {"galar",
          {"Normal Clean Mucosa"},
          {"Polyp", "Blood", "Active Bleeding", "Angiectasia", "Erosion", "Erythema", "Ulcer"}};
}

ClassMap ClassMap::synthetic() {
  return {"synthetic", {"Normal Clean Mucosa"}, {"Blood", "Specular"}};
}

ClassMap ClassMap::by_name(std::string_view name) {
  if (name == "kvasir") return kvasir();
  if (name == "galar") return galar();
  if (name == "synthetic") return synthetic();
  throw DataError("unknown class map '" + std::string(name) +
                  "' (expected kvasir|galar|synthetic)");
}

void ClassMap::validate() const {
  for (const auto& c : normal_classes)
    if (anomaly_classes.count(c))
      throw DataError("class map '" + name + "': '" + c + "' is both normal and anomaly");
}

std::optional<Label> ClassMap::map(std::string_view source_class) const {
  if (source_class == kUnlabeledClass) return Label::unlabeled;
  const std::string key(source_class);
  if (normal_classes.count(key)) return Label::normal;
  if (anomaly_classes.count(key)) return Label::anomaly;
  return std::nullopt;
}

// ---- image IO ----

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

Image read_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw DataError(path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr))
    throw DataError(path.string() + ": " + png.message);
  Image img(3, png.height, png.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = buf[(y * img.width + x) * 3 + c] / 255.f;
  return img;
}

// Next whitespace-delimited token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

Image read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string magic = ppm_token(in);
  if (magic != "P6" && magic != "P3") throw DataError(path.string() + ": not a PPM (P3/P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(ppm_token(in));
    h = std::stoul(ppm_token(in));
    maxval = std::stoul(ppm_token(in));
  } catch (const std::exception&) {
    throw DataError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535)
    throw DataError(path.string() + ": malformed PPM header");
  Image img(3, h, w);
  const float scale = 1.f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      std::size_t v = 0;
      if (magic == "P3") {
        const auto tok = ppm_token(in);
        if (tok.empty()) throw DataError(path.string() + ": truncated PPM");
        v = std::stoul(tok);
      } else if (maxval < 256) {
        const int b = in.get();
        if (b == EOF) throw DataError(path.string() + ": truncated PPM");
        v = static_cast<std::size_t>(b);
      } else {
        const int hi = in.get(), lo = in.get();
        if (lo == EOF) throw DataError(path.string() + ": truncated PPM");
        v = static_cast<std::size_t>(hi) << 8 | static_cast<std::size_t>(lo);
      }
      img.pixels[c * w * h + i] = std::min(1.f, static_cast<float>(v) * scale);
    }
  }
  return img;
}

std::string lower_ext(const fs::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

}  // namespace

Image read_image(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("image not found: " + path.string());
  const auto ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm" || ext == ".pnm") return read_ppm(path);
  throw DataError(path.string() + ": unsupported image format (expected .png or .ppm)");
}

void write_png(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("write_png: need 1 or 3 channels, got " + std::to_string(img.channels));
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(img.pixels.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        buf[(y * img.width + x) * img.channels + c] = to_byte(img.at(c, y, x));
  if (!png_image_write_to_file(&png, path.c_str(), 0, buf.data(), 0, nullptr))
    throw DataError(path.string() + ": " + png.message);
}

void write_ppm(const fs::path& path, const Image& img) {
  if (img.channels != 3) throw DataError("write_ppm: need 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.put(static_cast<char>(to_byte(img.at(c, y, x))));
}

// ---- manifests ----

namespace {

const std::vector<std::string> kManifestHeader{"path", "source_class", "patient_id"};

std::vector<std::string> split_csv(const std::string& line, std::size_t lineno,
                                   const fs::path& file) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back().push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back().push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back().push_back(ch);
    }
  }
  if (quoted)
    throw DataError(file.string() + ":" + std::to_string(lineno) + ": unterminated quote");
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q.push_back('"');
    q.push_back(c);
  }
  return q + "\"";
}

}  // namespace

std::vector<ManifestRow> read_manifest_rows(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    auto fields = split_csv(line, lineno, manifest);
    if (!header) {
      if (fields != kManifestHeader)
        throw DataError(manifest.string() + ":" + std::to_string(lineno) +
                        ": expected header 'path,source_class,patient_id'");
      header = true;
      continue;
    }
    if (fields.size() != 3)
      throw DataError(manifest.string() + ":" + std::to_string(lineno) + ": expected 3 fields, got " +
                      std::to_string(fields.size()));
    if (fields[0].empty() || fields[2].empty())
      throw DataError(manifest.string() + ":" + std::to_string(lineno) +
                      ": empty path or patient_id");
    rows.push_back({fields[0], fields[1], fields[2]});
  }
  if (!header) throw DataError(manifest.string() + ": empty manifest");
  return rows;
}

void write_manifest(const fs::path& manifest, const std::vector<ManifestRow>& rows) {
  std::ofstream out(manifest);
  if (!out) throw DataError("cannot write manifest " + manifest.string());
  out << "path,source_class,patient_id\n";
  for (const auto& r : rows)
    out << csv_field(r.path) << ',' << csv_field(r.source_class) << ','
        << csv_field(r.patient_id) << '\n';
}

ManifestLoad load_manifest(const fs::path& manifest, const ClassMap& classes,
                           std::optional<std::size_t> target) {
  classes.validate();
  const auto rows = read_manifest_rows(manifest);
  const fs::path base = manifest.parent_path();
  ManifestLoad out;
  out.rows = rows.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto label = classes.map(r.source_class);
    if (!label) {
      ++out.excluded;
      out.excluded_lines.push_back(i);
      continue;
    }
    const fs::path p = fs::path(r.path).is_absolute() ? fs::path(r.path) : base / r.path;
    Image img;
    try {
      img = read_image(p);
    } catch (const DataError& e) {
      throw DataError("manifest row " + std::to_string(i + 1) + " (" + r.path + "): " + e.what());
    }
    if (target) img = resize(img, *target, *target);
    out.samples.push_back({std::move(img), *label, r.patient_id,
                           *label == Label::unlabeled ? std::string() : r.source_class});
  }
  return out;
}

// ---- splits ----

SplitSpec::Part SplitSpec::part_of(const std::string& id) const {
  if (train.count(id)) return Part::train;
  if (val.count(id)) return Part::val;
  if (test.count(id)) return Part::test;
  return Part::none;
}

void SplitSpec::validate() const {
  auto check = [](const std::set<std::string>& a, const std::set<std::string>& b,
                  const char* an, const char* bn) {
    for (const auto& id : a)
      if (b.count(id))
        throw DataError(std::string("split: patient '") + id + "' is in both " + an + " and " + bn);
  };
  check(train, val, "train", "val");
  check(train, test, "train", "test");
  check(val, test, "val", "test");
}

std::string SplitSpec::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["train"] = train;
  j["val"] = val;
  j["test"] = test;
  return j.dump(2);
}

SplitSpec SplitSpec::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    SplitSpec s;
    s.seed = j.value("seed", std::uint64_t{0});
    s.train = j.value("train", std::set<std::string>{});
    s.val = j.value("val", std::set<std::string>{});
    s.test = j.value("test", std::set<std::string>{});
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split file: ") + e.what());
  }
}

void SplitSpec::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json() << '\n';
}

SplitSpec SplitSpec::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

SplitSpec patient_split(const std::vector<std::string>& patients, double ratio,
                        std::uint64_t seed, const std::vector<std::string>& reserved_test) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("patient_split: ratio must be in (0, 1)");
  SplitSpec s;
  s.seed = seed;
  s.test.insert(reserved_test.begin(), reserved_test.end());
  std::set<std::string> unique;
  for (const auto& p : patients)
    if (!s.test.count(p)) unique.insert(p);
  if (unique.size() < 2)
    throw DataError("patient_split: need at least 2 patients outside the test set, got " +
                    std::to_string(unique.size()));
  std::vector<std::string> order(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = order.size();
  auto n_train = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  s.train.insert(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.insert(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return s;
}

std::vector<Sample> select(const std::vector<Sample>& samples, const SplitSpec& split,
                           SplitSpec::Part part) {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (split.part_of(s.patient_id) == part) out.push_back(s);
  return out;
}

// ---- resampling ----

Image resize(const Image& img, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DataError("resize: target must be positive");
  if (img.height == height && img.width == width) return img;
  Image out(img.channels, height, width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
        const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = static_cast<float>(std::clamp(top * (1 - wy) + bot * wy, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image hflip(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image vflip(const Image& img) {
  Image out = img;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x)
        out.at(c, y, x) = img.at(c, img.height - 1 - y, x);
  return out;
}

namespace {

// Folds a continuous coordinate back into [0, n-1] by mirroring at the edges.
double reflect(double v, std::size_t n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * static_cast<double>(n - 1);
  v = std::fmod(std::abs(v), period);
  return v > static_cast<double>(n - 1) ? period - v : v;
}

}  // namespace

Image rotate(const Image& img, double degrees) {
  Image out(img.channels, img.height, img.width);
  const double rad = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      // Inverse mapping: rotate the output coordinate back into the source.
      const double sx = reflect(cs * dx - sn * dy + cx, img.width);
      const double sy = reflect(sn * dx + cs * dy + cy, img.height);
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
      const double wx = sx - x0, wy = sy - y0;
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
        const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = static_cast<float>(std::clamp(top * (1 - wy) + bot * wy, 0.0, 1.0));
      }
    }
  return out;
}

EraseRect random_erase(Image& img, std::span<const float> fill, std::mt19937_64& rng,
                       const EraseSettings& s) {
  if (fill.size() != img.channels)
    throw DataError("random_erase: fill needs one value per channel");
  const double area = static_cast<double>(img.height * img.width);
  std::uniform_real_distribution<double> area_dist(s.min_area, s.max_area);
  std::uniform_real_distribution<double> log_aspect(std::log(s.min_aspect), std::log(s.max_aspect));
  for (int attempt = 0; attempt < s.attempts; ++attempt) {
    const double target = area * area_dist(rng);
    const double aspect = std::exp(log_aspect(rng));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (h == 0 || w == 0 || h > img.height || w > img.width) continue;
    const double frac = static_cast<double>(h * w) / area;
    if (frac < s.min_area || frac > s.max_area) continue;
    EraseRect r{std::uniform_int_distribution<std::size_t>(0, img.height - h)(rng),
                std::uniform_int_distribution<std::size_t>(0, img.width - w)(rng), h, w};
    for (std::size_t c = 0; c < img.channels; ++c)
      for (std::size_t y = r.y; y < r.y + h; ++y)
        for (std::size_t x = r.x; x < r.x + w; ++x) img.at(c, y, x) = fill[c];
    return r;
  }
  return {};
}

Sample augment(const Sample& sample, const AugmentPolicy& policy, std::mt19937_64& rng,
               std::span<const float> fill) {
  Sample out = sample;
  if (!policy.any()) return out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (policy.rotate > 0 && u(rng) < policy.rotate) {
    std::uniform_real_distribution<double> angle(-policy.max_degrees, policy.max_degrees);
    out.image = rotate(out.image, angle(rng));
  }
  if (policy.hflip > 0 && u(rng) < policy.hflip) out.image = hflip(out.image);
  if (policy.vflip > 0 && u(rng) < policy.vflip) out.image = vflip(out.image);
  if (policy.erase > 0 && u(rng) < policy.erase) {
    std::vector<float> values(fill.begin(), fill.end());
    if (values.empty()) values.assign(out.image.channels, 0.5f);
    random_erase(out.image, values, rng, policy.erase_settings);
  }
  return out;
}

std::vector<float> channel_means(const std::vector<Sample>& samples) {
  if (samples.empty()) return {};
  const std::size_t c = samples.front().image.channels;
  std::vector<double> acc(c, 0.0);
  std::size_t count = 0;
  for (const auto& s : samples) {
    const auto& im = s.image;
    const std::size_t plane = im.height * im.width;
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < plane; ++i) acc[k] += im.pixels[k * plane + i];
    count += plane;
  }
  std::vector<float> out(c);
  for (std::size_t k = 0; k < c; ++k) out[k] = static_cast<float>(acc[k] / static_cast<double>(count));
  return out;
}

// ---- sampling ----

WeightedSampler::WeightedSampler(const std::vector<int>& labels) {
  std::size_t counts[2] = {0, 0};
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError("weighted sampler: labels must be 0 or 1");
    ++counts[l];
  }
  if (counts[0] == 0 || counts[1] == 0)
    throw DataError("weighted sampler: both classes must be present (normal " +
                    std::to_string(counts[0]) + ", anomaly " + std::to_string(counts[1]) + ")");
  probs_.resize(labels.size());
  cumulative_.resize(labels.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    probs_[i] = 0.5 / static_cast<double>(counts[labels[i]]);
    acc += probs_[i];
    cumulative_[i] = acc;
  }
  cumulative_.back() = 1.0;
}

std::size_t WeightedSampler::draw(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                               cumulative_.size() - 1);
}

std::vector<std::size_t> WeightedSampler::draw(std::size_t count, std::mt19937_64& rng) const {
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = draw(rng);
  return out;
}

// ---- batching ----

template <typename T>
Tensor<T> make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("make_batch: no indices");
  const Image& first = samples.at(indices[0]).image;
  const std::size_t per = first.pixels.size();
  std::vector<T> buf(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Image& im = samples.at(indices[b]).image;
    if (!im.same_shape(first)) throw DataError("make_batch: images differ in shape");
    std::copy(im.pixels.begin(), im.pixels.end(), buf.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return Tensor<T>({indices.size(), first.channels, first.height, first.width}, std::move(buf));
}

template Tensor<float> make_batch(const std::vector<Sample>&, std::span<const std::size_t>);
template Tensor<double> make_batch(const std::vector<Sample>&, std::span<const std::size_t>);

// ---- synthetic data ----

namespace {

struct Wave {
  double fy, fx, phase, amp;
};

std::vector<Wave> random_waves(std::mt19937_64& rng, int count, double amp) {
  std::uniform_real_distribution<double> freq(0.4, 2.2), dir(0.0, 2 * std::numbers::pi),
      phase(0.0, 2 * std::numbers::pi), scale(0.5, 1.0);
  std::vector<Wave> w;
  for (int i = 0; i < count; ++i) {
    const double f = freq(rng), d = dir(rng);
    w.push_back({f * std::sin(d), f * std::cos(d), phase(rng), amp * scale(rng)});
  }
  return w;
}

double eval_waves(const std::vector<Wave>& waves, double v, double u) {
  double s = 0.0;
  for (const auto& w : waves) s += w.amp * std::sin(2 * std::numbers::pi * (w.fy * v + w.fx * u) + w.phase);
  return s;
}

// Anti-aliased disc coverage at distance d from a centre of radius r.
double disc(double d, double r) { return std::clamp(r - d + 0.5, 0.0, 1.0); }

void paint_blob(Image& img, std::mt19937_64& rng, bool specular) {
  const double n = static_cast<double>(img.width);
  std::uniform_real_distribution<double> radius_frac(specular ? 0.04 : 0.07, specular ? 0.09 : 0.14);
  const double r = std::max(1.0, radius_frac(rng) * n);
  std::uniform_real_distribution<double> cy(r, img.height - 1 - r), cx(r, img.width - 1 - r);
  const double y0 = cy(rng), x0 = cx(rng);
  std::normal_distribution<double> jitter(0.0, 0.03);
  double rgb[3];
  if (specular) {
    rgb[0] = 0.98, rgb[1] = 0.97, rgb[2] = 0.95;
  } else {
    rgb[0] = 0.60 + jitter(rng), rgb[1] = 0.05, rgb[2] = 0.08;
  }
  // Slightly elliptical outline.
  std::uniform_real_distribution<double> stretch(0.75, 1.3);
  const double ey = stretch(rng), ex = 1.0 / ey;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      const double dy = (y - y0) / ey, dx = (x - x0) / ex;
      const double a = disc(std::sqrt(dy * dy + dx * dx), r);
      if (a <= 0) continue;
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<float>((1 - a) * img.at(c, y, x) + a * rgb[c]);
    }
}

Image pink_texture(std::mt19937_64& rng, std::size_t size) {
  Image img(3, size, size);
  std::normal_distribution<double> shift(0.0, 0.03);
  const double base[3] = {0.86, 0.56, 0.52};
  const double tone = shift(rng);
  const auto lum = random_waves(rng, 4, 0.06);
  const auto hue = random_waves(rng, 2, 0.02);
  const double inv = 1.0 / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double l = eval_waves(lum, y * inv, x * inv) + tone;
      const double h = eval_waves(hue, y * inv, x * inv);
      img.at(0, y, x) = static_cast<float>(std::clamp(base[0] + l + h, 0.0, 1.0));
      img.at(1, y, x) = static_cast<float>(std::clamp(base[1] + 0.9 * l, 0.0, 1.0));
      img.at(2, y, x) = static_cast<float>(std::clamp(base[2] + 0.9 * l - h, 0.0, 1.0));
    }
  return img;
}

}  // namespace

std::vector<Sample> synth_dataset(const SynthConfig& cfg) {
  if (cfg.size < 8) throw DataError("synth: image size must be at least 8");
  if (cfg.group_size < 20) throw DataError("synth: patient groups must hold at least 20 samples");
  const std::size_t n = cfg.n_normal + cfg.n_anomaly;
  std::vector<int> labels(n, 0);
  std::fill(labels.begin() + static_cast<std::ptrdiff_t>(cfg.n_normal), labels.end(), 1);
  std::mt19937_64 order_rng(cfg.seed);
  std::shuffle(labels.begin(), labels.end(), order_rng);

  // Consecutive runs of group_size; a short tail joins the previous patient.
  const std::size_t full_groups = std::max<std::size_t>(1, n / cfg.group_size);
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(i), std::uint64_t{0x5eed}};
    std::mt19937_64 rng(seq);
    Sample s;
    s.image = pink_texture(rng, cfg.size);
    if (labels[i] == 1) {
      const bool specular = std::uniform_real_distribution<double>(0, 1)(rng) < 0.3;
      const int blobs = std::uniform_int_distribution<int>(1, 3)(rng);
      for (int b = 0; b < blobs; ++b) paint_blob(s.image, rng, specular);
      s.label = Label::anomaly;
      s.source_class = specular ? "Specular" : "Blood";
    } else {
      s.label = Label::normal;
      s.source_class = "Normal Clean Mucosa";
    }
    const std::size_t group = std::min(i / cfg.group_size, full_groups - 1);
    s.patient_id = cfg.patient_prefix + std::to_string(cfg.patient_offset + group + 1);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ManifestRow> write_dataset(const fs::path& dir, const std::vector<Sample>& samples) {
  fs::create_directories(dir / "images");
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "images/%05zu.png", i);
    write_png(dir / name, samples[i].image);
    const auto& s = samples[i];
    rows.push_back({name, s.label == Label::unlabeled ? std::string(kUnlabeledClass) : s.source_class,
                    s.patient_id});
  }
  write_manifest(dir / "manifest.csv", rows);
  return rows;
}

}  // namespace vcead::data
