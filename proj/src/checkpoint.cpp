#include "vcead/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace vcead {

namespace {

constexpr char kMagic[8] = {'V', 'C', 'E', 'A', 'D', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

template <typename T>
constexpr const char* precision_tag() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename U>
void write_pod(std::ostream& out, const U& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U read_pod(std::istream& in, const std::filesystem::path& path) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(U)))
    throw CheckpointError(path.string() + ": truncated header");
  return v;
}

nlohmann::json read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError(path.string() + ": not a checkpoint file");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  const auto size = read_pod<std::uint64_t>(in, path);
  std::string text(size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(size)))
    throw CheckpointError(path.string() + ": truncated header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
}

CheckpointInfo parse_info(const nlohmann::json& h, const std::filesystem::path& path) {
  try {
    CheckpointInfo info;
    info.kind = nets::learner_from_string(h.at("learner").get<std::string>());
    info.preset = h.at("preset").get<std::string>();
    info.in_channels = h.at("in_channels").get<std::size_t>();
    info.image_size = h.at("image_size").get<std::size_t>();
    info.precision = h.at("precision").get<std::string>();
    info.trained = h.value("trained", false);
    if (info.precision != "f32" && info.precision != "f64")
      throw CheckpointError(path.string() + ": unknown precision " + info.precision);
    for (const auto& t : h.at("tensors"))
      info.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>()});
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return in;
}

template <typename S, typename T>
void read_values(std::istream& in, std::span<T> dst, const std::filesystem::path& path,
                 const std::string& name) {
  std::vector<S> buf(dst.size());
  if (!in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(S))))
    throw CheckpointError(path.string() + ": truncated data for " + name);
  for (std::size_t i = 0; i < buf.size(); ++i) dst[i] = static_cast<T>(buf[i]);
}

}  // namespace

template <typename T>
void save_checkpoint(const nets::Learner<T>& learner, const std::filesystem::path& path) {
  const auto params = learner.parameters();
  nlohmann::json h;
  h["learner"] = std::string(nets::to_string(learner.kind));
  h["preset"] = learner.preset_name;
  h["in_channels"] = learner.in_channels;
  h["image_size"] = learner.image_size;
  h["precision"] = precision_tag<T>();
  h["trained"] = learner.trained;
  h["tensors"] = nlohmann::json::array();
  for (const auto& p : params)
    h["tensors"].push_back({{"name", p.name}, {"shape", p.tensor.shape()}});
  const std::string text = h.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    const auto d = p.tensor.data();
    out.write(reinterpret_cast<const char*>(d.data()),
              static_cast<std::streamsize>(d.size() * sizeof(T)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_info(read_header(in, path), path);
}

template <typename T>
nets::Learner<T> load_checkpoint(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto info = parse_info(read_header(in, path), path);
  auto learner = nets::make_learner<T>(info.kind, info.preset, info.in_channels,
                                       info.image_size, 0);
  learner.trained = info.trained;
  const auto params = learner.parameters();
  if (params.size() != info.tensors.size())
    throw CheckpointError(path.string() + ": stores " + std::to_string(info.tensors.size()) +
                          " tensors, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& want = params[i];
    const auto& got = info.tensors[i];
    if (want.name != got.name || want.tensor.shape() != got.shape)
      throw CheckpointError(path.string() + ": tensor " + std::to_string(i) + " is " +
                            got.name + " " + shape_str(got.shape) + ", expected " + want.name +
                            " " + shape_str(want.tensor.shape()));
    Tensor<T> dst = want.tensor;
    if (info.precision == "f32")
      read_values<float>(in, dst.data_mut(), path, got.name);
    else
      read_values<double>(in, dst.data_mut(), path, got.name);
  }
  return learner;
}

template void save_checkpoint(const nets::Learner<float>&, const std::filesystem::path&);
template void save_checkpoint(const nets::Learner<double>&, const std::filesystem::path&);
template nets::Learner<float> load_checkpoint<float>(const std::filesystem::path&);
template nets::Learner<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace vcead
