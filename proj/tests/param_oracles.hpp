#pragma once

// Parameter counts derived from a preset's stage table, without building layers.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "vcead/nets.hpp"

namespace vcead::testkit {

using Counts = std::vector<std::pair<std::string, std::size_t>>;

// Per-layer counts from the stage table alone.
inline Counts hand_counts(const nets::EncoderPreset& p, std::size_t in_channels) {
  Counts c;
  const std::size_t k0 = p.stem.kernel;
  c.emplace_back("stem.conv", in_channels * p.stem.out_channels * k0 * k0);
  c.emplace_back("stem.bn", 2 * p.stem.out_channels);
  std::size_t in = p.stem.out_channels;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto& b = p.blocks[i];
    const std::string at = "blocks." + std::to_string(i) + ".";
    const auto mid = static_cast<std::size_t>(std::llround(in * b.expansion_ratio));
    if (mid != in) {
      c.emplace_back(at + "expand.conv", in * mid);
      c.emplace_back(at + "expand.bn", 2 * mid);
    }
    c.emplace_back(at + "depthwise.conv", mid * b.kernel * b.kernel);
    c.emplace_back(at + "depthwise.bn", 2 * mid);
    if (b.use_squeeze_excite) {
      const std::size_t s = nets::squeeze_channels(mid);
      c.emplace_back(at + "se.reduce", mid * s + s);
      c.emplace_back(at + "se.expand", s * mid + mid);
    }
    c.emplace_back(at + "project.conv", mid * b.out_channels);
    c.emplace_back(at + "project.bn", 2 * b.out_channels);
    in = b.out_channels;
  }
  if (in != p.latent_channels) {
    c.emplace_back("head.conv", in * p.latent_channels);
    c.emplace_back("head.bn", 2 * p.latent_channels);
  }
  return c;
}

inline std::size_t total(const Counts& c) {
  std::size_t n = 0;
  for (const auto& [name, v] : c) n += v;
  return n;
}

}  // namespace vcead::testkit
