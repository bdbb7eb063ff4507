#pragma once

#include <string>
#include <vector>

#include "nbnet/gradcheck.hpp"
#include "nbnet/net.hpp"
#include "nbnet/ops.hpp"
#include "nbnet/ssa.hpp"

// Canned finite-difference suites behind `gradcheck --module ...`: one entry
// per differentiable operation, the SSA block in both variants, and the
// end-to-end tiny network. All run in 64-bit mode.

namespace nbnet {

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

namespace detail {

template <typename Fn>
NamedGradCheck run_check(const std::string& name, Fn&& fn,
                         std::vector<Tensor<double>> inputs,
                         std::vector<std::string> names,
                         GradCheckOptions opt = {}) {
  NamedGradCheck out;
  out.name = name;
  out.report = gradcheck(fn, std::move(inputs), std::move(names), opt);
  return out;
}

inline Tensor<double> rnd(Shape shape, uint64_t seed, double lo = -1.0,
                          double hi = 1.0) {
  SequentialRng rng(seed);
  std::vector<double> data(static_cast<size_t>(numel(shape)));
  for (auto& v : data) v = lo + (hi - lo) * rng.uniform();
  return Tensor<double>::from_data(std::move(shape), std::move(data));
}

}  // namespace detail

inline std::vector<NamedGradCheck> gradcheck_core() {
  using detail::rnd;
  using detail::run_check;
  std::vector<NamedGradCheck> out;

  {
    auto probe = rnd({1, 4, 3, 3}, 1);
    out.push_back(run_check(
        "conv2d",
        [&](const std::vector<Tensor<double>>& t) {
          return sum(mul(conv2d(t[0], t[1], t[2], 2, 1), probe));
        },
        {rnd({1, 3, 6, 6}, 2), rnd({4, 3, 3, 3}, 3), rnd({4}, 4)},
        {"input", "weight", "bias"}));
  }
  {
    auto probe = rnd({1, 3, 8, 8}, 5);
    out.push_back(run_check(
        "conv_transpose2d",
        [&](const std::vector<Tensor<double>>& t) {
          return sum(mul(conv_transpose2d(t[0], t[1], t[2], 2), probe));
        },
        {rnd({1, 2, 4, 4}, 6), rnd({2, 3, 2, 2}, 7), rnd({3}, 8)},
        {"input", "weight", "bias"}));
  }
  {
    auto x = rnd({4, 7}, 9);
    for (auto& v : x.mutable_data()) v += (v >= 0 ? 1e-3 : -1e-3);
    auto probe = rnd({4, 7}, 10);
    out.push_back(run_check(
        "leaky_relu",
        [&](const std::vector<Tensor<double>>& t) {
          return sum(mul(leaky_relu(t[0], 0.2), probe));
        },
        {x}, {"x"}));
  }
  {
    auto probe = rnd({2, 5}, 11);
    out.push_back(run_check(
        "add_mul",
        [&](const std::vector<Tensor<double>>& t) {
          return sum(mul(add(t[0], mul(t[0], t[1])), probe));
        },
        {rnd({2, 5}, 12), rnd({2, 5}, 13)}, {"a", "b"}));
  }
  {
    auto probe = rnd({1, 5, 2, 2}, 14);
    out.push_back(run_check(
        "concat_reshape_permute_crop",
        [&](const std::vector<Tensor<double>>& t) {
          auto cat = concat<double>({t[0], t[1]}, 1);
          auto four = reshape(permute(cat, {0, 1, 3, 2}), {1, 5, 3, 3});
          return sum(mul(crop2d(four, 0, 1, 2, 2), probe));
        },
        {rnd({1, 2, 3, 3}, 15), rnd({1, 3, 3, 3}, 16)}, {"x1", "x2"}));
  }
  {
    out.push_back(run_check(
        "mean",
        [&](const std::vector<Tensor<double>>& t) { return mean(t[0]); },
        {rnd({3, 6}, 17)}, {"x"}));
  }
  {
    auto probe = rnd({2, 3, 4}, 18);
    out.push_back(run_check(
        "bmm",
        [&](const std::vector<Tensor<double>>& t) {
          return sum(mul(bmm(t[0], t[1]), probe));
        },
        {rnd({2, 3, 5}, 19), rnd({2, 5, 4}, 20)}, {"a", "b"}));
  }
  for (double eps : {0.0, 1e-4}) {
    auto probe = rnd({2, 10, 3}, 21);
    out.push_back(run_check(
        "batched_gram_solve(eps=" + std::to_string(eps) + ")",
        [&, eps](const std::vector<Tensor<double>>& t) {
          return sum(mul(batched_gram_solve(t[0], t[1], eps), probe));
        },
        {rnd({2, 10, 4}, 22), rnd({2, 10, 3}, 23)}, {"V", "X"}));
  }
  {
    auto p = rnd({3, 8}, 24);
    for (auto& v : p.mutable_data()) v += 0.75;  // clear of ties
    out.push_back(run_check(
        "l1_loss",
        [&](const std::vector<Tensor<double>>& t) {
          return l1_loss(t[0], t[1]);
        },
        {p, rnd({3, 8}, 25)}, {"pred", "target"}));
  }
  return out;
}

inline std::vector<NamedGradCheck> gradcheck_ssa() {
  using detail::rnd;
  std::vector<NamedGradCheck> out;
  for (auto variant : {SsaVariant::kProjection, SsaVariant::kDotProduct}) {
    SsaConfig cfg;
    cfg.k = 3;
    cfg.variant = variant;
    SequentialRng rng(31);
    auto module = SsaModule<double>::init(
        4, cfg, variant == SsaVariant::kProjection ? 1e-4 : 0.0, 0.2, rng);
    ParamList<double> params;
    module.collect("basis", params);
    auto probe = rnd({1, 4, 8, 8}, 32);

    std::vector<Tensor<double>> inputs{rnd({1, 4, 8, 8}, 33),
                                       rnd({1, 4, 8, 8}, 34)};
    std::vector<std::string> names{"x1", "x2"};
    for (auto& p : params) {
      inputs.push_back(p.tensor);
      names.push_back(p.name);
    }
    NamedGradCheck c;
    c.name = variant == SsaVariant::kProjection ? "ssa_projection"
                                                : "ssa_dot_product";
    c.report = gradcheck(
        [&](const std::vector<Tensor<double>>& in) {
          SsaModule<double> m = module;
          size_t i = 2;
          m.visit("basis", [&](const std::string&, Tensor<double>& t) {
            t = in[i++];
          });
          return sum(mul(m.forward(in[0], in[1]), probe));
        },
        inputs, names, {.max_coords = 48});
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<NamedGradCheck> gradcheck_nbnet() {
  using detail::rnd;
  NetworkConfig cfg;
  cfg.stages = 2;
  cfg.base_channels = 8;
  cfg.ssa.k = 4;
  auto net = NbNet<double>::build(cfg, 41);
  auto params = net.parameters();
  auto probe = rnd({1, 3, 16, 16}, 42);

  std::vector<Tensor<double>> inputs{rnd({1, 3, 16, 16}, 43, 0.0, 1.0)};
  std::vector<std::string> names{"input"};
  for (auto& p : params) {
    inputs.push_back(p.tensor);
    names.push_back(p.name);
  }
  NamedGradCheck c;
  c.name = "nbnet_tiny_end_to_end";
  c.report = gradcheck(
      [&](const std::vector<Tensor<double>>& in) {
        NbNet<double> m = net;
        m.bind_parameters({in.begin() + 1, in.end()});
        return sum(mul(m.forward(in[0]), probe));
      },
      inputs, names, {.max_coords = 6});
  return {std::move(c)};
}

inline std::vector<NamedGradCheck> gradcheck_suite(const std::string& module) {
  std::vector<NamedGradCheck> out;
  auto append = [&](std::vector<NamedGradCheck> v) {
    for (auto& c : v) out.push_back(std::move(c));
  };
  if (module == "all" || module == "core") append(gradcheck_core());
  if (module == "all" || module == "ssa") append(gradcheck_ssa());
  if (module == "all" || module == "nbnet") append(gradcheck_nbnet());
  if (out.empty())
    throw ConfigError("gradcheck: unknown module '" + module +
                      "' (want all|core|ssa|nbnet)");
  return out;
}

}  // namespace nbnet
