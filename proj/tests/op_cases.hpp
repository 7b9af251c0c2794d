#pragma once

// Randomized instances of every differentiable op, shared by the unit tests
// and the acceptance suite.

#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"

namespace vcead::testkit {

struct OpCase {
  std::string name;
  Fn fn;
  std::vector<Tensor<double>> inputs;
};

using OpFactory = std::function<OpCase(std::mt19937_64&)>;

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::vector<std::pair<std::string, OpFactory>> op_factories() {
  namespace o = vcead::ops;
  using T = Tensor<double>;
  std::vector<std::pair<std::string, OpFactory>> f;

  f.emplace_back("conv2d", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 0, 1) ? 3 : 1;
    const int stride = static_cast<int>(pick(rng, 1, 2));
    const int pad = k == 3 ? static_cast<int>(pick(rng, 0, 1)) : 0;
    const std::size_t h = pick(rng, 4, 6), w = pick(rng, 4, 6);
    ops::ConvParams p{stride, pad};
    return OpCase{"conv2d",
                  [p](const std::vector<T>& in) { return o::conv2d(in[0], in[1], in[2], p); },
                  {random_tensor({n, cin, h, w}, rng), random_tensor({cout, cin, k, k}, rng),
                   random_tensor({cout}, rng)}};
  });
  f.emplace_back("depthwise_conv2d", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 0, 1) ? 3 : 5;
    const int stride = static_cast<int>(pick(rng, 1, 2));
    const int pad = static_cast<int>(k / 2);
    const std::size_t h = pick(rng, 4, 7), w = pick(rng, 4, 7);
    ops::ConvParams p{stride, pad};
    return OpCase{"depthwise_conv2d",
                  [p](const std::vector<T>& in) {
                    return o::depthwise_conv2d(in[0], in[1], in[2], p);
                  },
                  {random_tensor({n, c, h, w}, rng), random_tensor({c, 1, k, k}, rng),
                   random_tensor({c}, rng)}};
  });
  f.emplace_back("dense", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 3), fi = pick(rng, 1, 5), fo = pick(rng, 1, 4);
    return OpCase{"dense",
                  [](const std::vector<T>& in) { return o::dense(in[0], in[1], in[2]); },
                  {random_tensor({n, fi}, rng), random_tensor({fo, fi}, rng),
                   random_tensor({fo}, rng)}};
  });
  f.emplace_back("relu", [](std::mt19937_64& rng) {
    return OpCase{"relu", [](const std::vector<T>& in) { return o::relu(in[0]); },
                  {random_away_from({2, 3, 3, 2}, rng, {0.0}, -2.0, 2.0)}};
  });
  f.emplace_back("hardswish", [](std::mt19937_64& rng) {
    return OpCase{"hardswish", [](const std::vector<T>& in) { return o::hardswish(in[0]); },
                  {random_away_from({2, 3, 3, 2}, rng, {-3.0, 3.0}, -5.0, 5.0)}};
  });
  f.emplace_back("sigmoid", [](std::mt19937_64& rng) {
    return OpCase{"sigmoid", [](const std::vector<T>& in) { return o::sigmoid(in[0]); },
                  {random_tensor({2, 5}, rng, -4.0, 4.0)}};
  });
  f.emplace_back("global_avg_pool", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 3);
    return OpCase{"global_avg_pool",
                  [](const std::vector<T>& in) { return o::global_avg_pool(in[0]); },
                  {random_tensor({n, c, pick(rng, 1, 4), pick(rng, 1, 4)}, rng)}};
  });
  f.emplace_back("upsample_nearest", [](std::mt19937_64& rng) {
    return OpCase{"upsample_nearest",
                  [](const std::vector<T>& in) { return o::upsample_nearest(in[0], 2); },
                  {random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 1, 3),
                                  pick(rng, 1, 3)},
                                 rng)}};
  });
  f.emplace_back("batchnorm_affine", [](std::mt19937_64& rng) {
    const std::size_t c = pick(rng, 1, 4);
    return OpCase{"batchnorm_affine",
                  [](const std::vector<T>& in) {
                    return o::batchnorm_affine(in[0], in[1], in[2]);
                  },
                  {random_tensor({2, c, 3, 3}, rng), random_tensor({c}, rng),
                   random_tensor({c}, rng)}};
  });
  f.emplace_back("add", [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
    return OpCase{"add", [](const std::vector<T>& in) { return o::add(in[0], in[1]); },
                  {random_tensor(s, rng), random_tensor(s, rng)}};
  });
  f.emplace_back("mul", [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 1, 3), pick(rng, 1, 4)};
    return OpCase{"mul", [](const std::vector<T>& in) { return o::mul(in[0], in[1]); },
                  {random_tensor(s, rng), random_tensor(s, rng)}};
  });
  f.emplace_back("scale", [](std::mt19937_64& rng) {
    const double factor = std::uniform_real_distribution<double>(-2, 2)(rng);
    return OpCase{"scale",
                  [factor](const std::vector<T>& in) { return o::scale(in[0], factor); },
                  {random_tensor({3, 2}, rng)}};
  });
  f.emplace_back("concat", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 2);
    return OpCase{"concat",
                  [](const std::vector<T>& in) { return o::concat(in); },
                  {random_tensor({n, pick(rng, 1, 3), 2, 3}, rng),
                   random_tensor({n, pick(rng, 1, 3), 2, 3}, rng),
                   random_tensor({n, pick(rng, 1, 3), 2, 3}, rng)}};
  });
  f.emplace_back("channel_scale", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 4);
    return OpCase{"channel_scale",
                  [](const std::vector<T>& in) { return o::channel_scale(in[0], in[1]); },
                  {random_tensor({n, c, 3, 2}, rng), random_tensor({n, c}, rng)}};
  });
  f.emplace_back("softmax", [](std::mt19937_64& rng) {
    return OpCase{"softmax", [](const std::vector<T>& in) { return o::softmax(in[0]); },
                  {random_tensor({pick(rng, 1, 4), pick(rng, 2, 4)}, rng, -3, 3)}};
  });
  f.emplace_back("select_column", [](std::mt19937_64& rng) {
    const std::size_t k = pick(rng, 2, 4), j = pick(rng, 0, k - 1);
    return OpCase{"select_column",
                  [j](const std::vector<T>& in) { return o::select_column(in[0], j); },
                  {random_tensor({pick(rng, 1, 4), k}, rng)}};
  });
  f.emplace_back("gather_rows", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 2, 4);
    std::vector<std::size_t> rows{0, n - 1, 0, pick(rng, 0, n - 1)};
    return OpCase{"gather_rows",
                  [rows](const std::vector<T>& in) { return o::gather_rows(in[0], rows); },
                  {random_tensor({n, 3}, rng)}};
  });
  f.emplace_back("sum", [](std::mt19937_64& rng) {
    return OpCase{"sum", [](const std::vector<T>& in) { return o::sum(in[0]); },
                  {random_tensor({2, 3}, rng)}};
  });
  f.emplace_back("mean", [](std::mt19937_64& rng) {
    return OpCase{"mean", [](const std::vector<T>& in) { return o::mean(in[0]); },
                  {random_tensor({3, 2, 2}, rng)}};
  });
  f.emplace_back("mse_loss", [](std::mt19937_64& rng) {
    const Shape s{pick(rng, 1, 3), 3, 2, 2};
    return OpCase{"mse_loss",
                  [](const std::vector<T>& in) { return o::mse_loss(in[0], in[1]); },
                  {random_tensor(s, rng), random_tensor(s, rng)}};
  });
  f.emplace_back("ce_loss", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 6);
    std::vector<double> y(n);
    for (auto& v : y) v = static_cast<double>(pick(rng, 0, 1));
    T labels({n}, y);
    return OpCase{"ce_loss",
                  [labels](const std::vector<T>& in) { return o::ce_loss(labels, in[0]); },
                  {random_tensor({n}, rng, 0.05, 0.95)}};
  });
  f.emplace_back("softmax_ce_chain", [](std::mt19937_64& rng) {
    const std::size_t n = pick(rng, 1, 6);
    std::vector<double> y(n);
    for (auto& v : y) v = static_cast<double>(pick(rng, 0, 1));
    T labels({n}, y);
    return OpCase{"softmax_ce_chain",
                  [labels](const std::vector<T>& in) {
                    return o::ce_loss(labels, o::select_column(o::softmax(in[0]), 1));
                  },
                  {random_tensor({n, 2}, rng, -2, 2)}};
  });
  return f;
}

}  // namespace vcead::testkit
