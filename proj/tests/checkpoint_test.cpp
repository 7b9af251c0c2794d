#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "vcead/checkpoint.hpp"

using namespace vcead;
using namespace vcead::nets;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "vcead_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

template <typename T>
bool bit_equal(const Learner<T>& a, const Learner<T>& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const auto da = pa[i].tensor.data(), db = pb[i].tensor.data();
    if (pa[i].name != pb[i].name || da.size() != db.size()) return false;
    if (std::memcmp(da.data(), db.data(), da.size() * sizeof(T)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(CheckpointTest, RoundTripIsBitExactForEveryLearner) {
  for (auto kind : {LearnerKind::classifier, LearnerKind::autoencoder,
                    LearnerKind::semi_supervised}) {
    auto original = make_learner<float>(kind, "desk_tiny", 3, 32, 17);
    original.trained = true;
    const auto path = temp_file(std::string(to_string(kind)) + ".ckpt");
    save_checkpoint(original, path);
    auto info = read_checkpoint_info(path);
    EXPECT_EQ(info.kind, kind);
    EXPECT_EQ(info.preset, "desk_tiny");
    EXPECT_EQ(info.precision, "f32");
    EXPECT_TRUE(info.trained);
    auto loaded = load_checkpoint<float>(path);
    EXPECT_TRUE(bit_equal(original, loaded));
    EXPECT_TRUE(loaded.trained);
  }
}

TEST(CheckpointTest, DoublePrecisionRoundTrip) {
  auto original = make_learner<double>(LearnerKind::semi_supervised, "desk_identity", 1, 16, 3);
  const auto path = temp_file("semi64.ckpt");
  save_checkpoint(original, path);
  EXPECT_EQ(read_checkpoint_info(path).precision, "f64");
  EXPECT_TRUE(bit_equal(original, load_checkpoint<double>(path)));
}

TEST(CheckpointTest, MissingFileAndGarbageAreRejected) {
  EXPECT_THROW(load_checkpoint<float>(temp_file("does_not_exist.ckpt")), CheckpointError);
  const auto path = temp_file("garbage.ckpt");
  std::ofstream(path) << "hello world";
  EXPECT_THROW(read_checkpoint_info(path), CheckpointError);
}

TEST(CheckpointTest, TruncatedDataIsRejected) {
  auto original = make_learner<float>(LearnerKind::classifier, "desk_tiny", 3, 32, 1);
  const auto path = temp_file("trunc.ckpt");
  save_checkpoint(original, path);
  fs::resize_file(path, fs::file_size(path) - 16);
  try {
    load_checkpoint<float>(path);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}
