#include "bam/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "bam/boundary.hpp"
#include "bam/frontend.hpp"
#include "bam/model.hpp"

namespace bam {

double gradcheck_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
  return std::abs(analytic - numeric) / scale;
}

double gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt, Rng& rng,
                 std::size_t* coordinates, const std::function<std::vector<double>()>& discrete) {
  std::vector<Tensor> params = wrt;
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  const Tensor out = f();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> r(out.numel());
  for (auto& x : r) x = u(rng);
  const Tensor weights = Tensor::from_vector(out.shape(), r);
  auto loss_of = [&](const Tensor& y) { return sum(mul(y, weights)); };
  loss_of(out).backward();
  const std::vector<double> reference = discrete ? discrete() : std::vector<double>{};

  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    analytic.emplace_back(p.grad().begin(), p.grad().end());
    if (analytic.back().size() != p.numel()) analytic.back().assign(p.numel(), 0.0);
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + kGradcheckStep;
      const double plus = loss_of(f()).item();
      const bool flip_plus = discrete && discrete() != reference;
      data[i] = saved - kGradcheckStep;
      const double minus = loss_of(f()).item();
      const bool flip_minus = discrete && discrete() != reference;
      data[i] = saved;
      if (flip_plus || flip_minus) {
        throw DiscreteFlip("a +-h perturbation flipped a thresholded decision");
      }
      const double numeric = (plus - minus) / (2.0 * kGradcheckStep);
      worst = std::max(worst, gradcheck_relative_error(analytic[k][i], numeric));
      ++count;
    }
  }
  if (coordinates) *coordinates = count;
  return worst;
}

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), true);
}

// Values bounded away from zero (for division and kinks at 0).
Tensor away_from_zero(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> u(0.3, 1.5);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return Tensor::from_vector(std::move(shape), std::move(v), true);
}

struct Case {
  std::function<Tensor()> f;
  std::vector<Tensor> wrt;
};

std::vector<Case> op_cases(std::string_view op, Rng& rng) {
  std::vector<Case> cases;
  auto add_case = [&](std::function<Tensor()> f, std::vector<Tensor> wrt) {
    cases.push_back({std::move(f), std::move(wrt)});
  };
  if (op == "add") {
    auto a = rand_tensor({3, 4}, rng), b = rand_tensor({4}, rng);
    add_case([=] { return add(a, b); }, {a, b});
  } else if (op == "sub") {
    auto a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 1}, rng);
    add_case([=] { return sub(a, b); }, {a, b});
  } else if (op == "mul") {
    auto a = rand_tensor({2, 3, 4}, rng), b = rand_tensor({3, 1}, rng);
    add_case([=] { return mul(a, b); }, {a, b});
  } else if (op == "div") {
    auto a = rand_tensor({3, 4}, rng), b = away_from_zero({3, 1}, rng);
    add_case([=] { return div(a, b); }, {a, b});
  } else if (op == "scale") {
    auto a = rand_tensor({5}, rng);
    add_case([=] { return scale(a, -1.7); }, {a});
  } else if (op == "matmul") {
    auto a = rand_tensor({3, 4}, rng), b = rand_tensor({4, 2}, rng);
    add_case([=] { return matmul(a, b); }, {a, b});
    auto c = rand_tensor({2, 3, 4}, rng), d = rand_tensor({4, 3}, rng);
    add_case([=] { return matmul(c, d); }, {c, d});
    auto e = rand_tensor({2, 3, 4}, rng), g = rand_tensor({2, 4, 2}, rng);
    add_case([=] { return matmul(e, g); }, {e, g});
  } else if (op == "linear") {
    auto x = rand_tensor({2, 3, 4}, rng), w = rand_tensor({5, 4}, rng), b = rand_tensor({5}, rng);
    add_case([=] { return linear(x, w, b); }, {x, w, b});
  } else if (op == "tanh") {
    auto a = rand_tensor({6}, rng, -2, 2);
    add_case([=] { return tanh(a); }, {a});
  } else if (op == "sigmoid") {
    auto a = rand_tensor({6}, rng, -3, 3);
    add_case([=] { return sigmoid(a); }, {a});
  } else if (op == "selu") {
    auto a = away_from_zero({8}, rng);
    add_case([=] { return selu(a); }, {a});
  } else if (op == "softmax") {
    auto a = rand_tensor({3, 4}, rng, -2, 2);
    add_case([=] { return softmax(a, 1); }, {a});
    auto b = rand_tensor({2, 3, 2}, rng, -2, 2);
    add_case([=] { return softmax(b, 1); }, {b});
  } else if (op == "masked_softmax") {
    auto a = rand_tensor({4, 4}, rng, -2, 2);
    const Tensor m = Tensor::from_vector({4, 4}, {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0, 1, 0, 1, 1});
    add_case([=] { return masked_softmax(a, 1, m); }, {a});
  } else if (op == "batch_norm") {
    auto x = rand_tensor({5, 3}, rng), g = rand_tensor({3}, rng), b = rand_tensor({3}, rng);
    auto mean = std::make_shared<std::vector<double>>(3, 0.0);
    auto var = std::make_shared<std::vector<double>>(3, 1.0);
    add_case([=] { return batch_norm(x, g, b, 1, {*mean, *var, 0.1, 1e-5}, true); }, {x, g, b});
    auto y = rand_tensor({2, 3, 4}, rng);
    auto mean2 = std::make_shared<std::vector<double>>(std::vector<double>{0.1, -0.2, 0.3});
    auto var2 = std::make_shared<std::vector<double>>(std::vector<double>{0.5, 1.5, 2.0});
    add_case([=] { return batch_norm(y, g, b, 1, {*mean2, *var2, 0.1, 1e-5}, false); },
             {y, g, b});
  } else if (op == "conv1d") {
    auto x = rand_tensor({2, 2, 9}, rng), w = rand_tensor({3, 2, 3}, rng), b = rand_tensor({3}, rng);
    add_case([=] { return conv1d(x, w, b, 2, 1, 2); }, {x, w, b});
  } else if (op == "reshape") {
    auto a = rand_tensor({2, 6}, rng);
    add_case([=] { return reshape(a, {3, 4}); }, {a});
  } else if (op == "permute") {
    auto a = rand_tensor({2, 3, 4}, rng);
    add_case([=] { return permute(a, {2, 0, 1}); }, {a});
  } else if (op == "concat") {
    auto a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 2}, rng);
    add_case([=] { return concat({a, b}, 1); }, {a, b});
  } else if (op == "slice") {
    auto a = rand_tensor({3, 5}, rng);
    add_case([=] { return slice(a, 1, 1, 3); }, {a});
  } else if (op == "sum") {
    auto a = rand_tensor({3, 2}, rng);
    add_case([=] { return sum(a); }, {a});
  } else if (op == "mean") {
    auto a = rand_tensor({3, 2}, rng);
    add_case([=] { return mean(a); }, {a});
  } else if (op == "sum_axis") {
    auto a = rand_tensor({2, 3, 4}, rng);
    add_case([=] { return sum_axis(a, 1); }, {a});
  } else if (op == "mean_axis") {
    auto a = rand_tensor({2, 3, 4}, rng);
    add_case([=] { return mean_axis(a, 2, true); }, {a});
  } else if (op == "max_axis") {
    // A permutation of well-separated values: no ties within h.
    std::vector<double> v(12);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i);
    std::shuffle(v.begin(), v.end(), rng);
    auto a = Tensor::from_vector({3, 4}, v, true);
    add_case([=] { return max_axis(a, 1); }, {a});
  } else if (op == "cross_entropy") {
    auto logits = rand_tensor({5, 2}, rng, -2, 2);
    const std::vector<int> t = {0, 1, 1, 0, 1};
    const std::vector<double> w = {1, 1, 0, 1, 1};
    add_case([=] { return cross_entropy(logits, t, w); }, {logits});
  } else if (op == "bce_with_logits") {
    auto logits = rand_tensor({2, 3}, rng, -3, 3);
    const std::vector<double> t = {0, 1, 1, 0, 0, 1};
    const std::vector<double> w = {1, 1, 1, 0, 1, 1};
    add_case([=] { return bce_with_logits(logits, t, w); }, {logits});
  }
  return cases;
}

GradcheckEntry run_cases(const std::string& suite, const std::string& name,
                         const std::vector<Case>& cases, Rng& rng) {
  GradcheckEntry e{suite, name, 0.0, 0, false};
  for (const auto& c : cases) {
    std::size_t n = 0;
    e.max_rel_error = std::max(e.max_rel_error, gradcheck(c.f, c.wrt, rng, &n));
    e.coordinates += n;
  }
  e.passed = !cases.empty() && e.max_rel_error <= kGradcheckTolerance;
  return e;
}

std::vector<Tensor> tensors_of(const NamedTensors& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

constexpr std::size_t kT = 4;
constexpr std::size_t kD = 4;
constexpr std::size_t kB = 2;

BamConfig tiny_config(Variant variant, std::uint64_t seed) {
  BamConfig cfg;
  cfg.variant = variant;
  cfg.dim = kD;
  cfg.encoder_channels = 4;
  cfg.seed = seed;
  return cfg;
}

// Samples giving exactly kT output frames: kT * stride * hop.
std::size_t tiny_length(const BamConfig& cfg) {
  return kT * cfg.stride * static_cast<std::size_t>(cfg.sample_rate * cfg.hop_ms / 1000.0);
}

GradcheckEntry model_entry(Variant variant, std::uint64_t seed) {
  // Retry with fresh draws if a perturbation flips a predicted boundary.
  for (std::uint64_t attempt = 0; attempt < 20; ++attempt) {
    Rng rng(seed * 1000 + attempt);
    BamModel model(tiny_config(variant, seed + attempt));
    const std::size_t len = tiny_length(model.config());
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> wave(kB * len);
    for (auto& x : wave) x = noise(rng);
    const Tensor input = Tensor::from_vector({kB, len}, wave);
    const std::vector<std::size_t> valid = {kT, kT - 1};
    std::vector<std::uint8_t> y = {0, 1, 1, 0, 1, 1, 0, 0};
    std::vector<std::uint8_t> b = {0, 1, 0, 0, 1, 0, 0, 0};
    std::vector<double> w = {1, 1, 1, 1, 1, 1, 1, 0};
    FramePrediction last;
    auto f = [&] {
      last = model.forward(input, true, valid);
      return total_loss(last, y, b, w, 0.5).total;
    };
    auto discrete = [&] {
      return last.boundary_decision.defined() ? last.boundary_decision.to_vector()
                                              : std::vector<double>{};
    };
    try {
      std::size_t n = 0;
      const double err = gradcheck(f, tensors_of(model.parameters()), rng, &n, discrete);
      return {"module", "model/" + to_string(variant), err, n, err <= kGradcheckTolerance};
    } catch (const DiscreteFlip&) {
    }
  }
  return {"module", "model/" + to_string(variant), INFINITY, 0, false};
}

std::vector<GradcheckEntry> module_entries(std::uint64_t seed) {
  std::vector<GradcheckEntry> out;
  Rng rng(seed);
  {
    ConvEncoder enc(8000, 20.0, 3, kD, rng);
    const Tensor wave = rand_tensor({kB, 1000}, rng);
    NamedTensors p;
    enc.collect("encoder", p);
    out.push_back(run_cases("module", "encoder",
                            {{[=] { return enc.encode(wave); }, tensors_of(p)},
                             {[=] { return enc.encode_aligned(wave); }, tensors_of(p)}},
                            rng));
  }
  {
    AttentivePool pool(kD, rng);
    const Tensor x = rand_tensor({kB, 10, kD}, rng);
    NamedTensors p;
    pool.collect("pool", p);
    auto wrt = tensors_of(p);
    wrt.push_back(x);
    out.push_back(run_cases("module", "attentive_pool",
                            {{[=] { return pool(x, 4).pooled; }, wrt}}, rng));
  }
  {
    auto fab = std::make_shared<FrameAttentionBlock>(kD, 2, rng);
    const Tensor x = rand_tensor({kB, kT, kD}, rng);
    const Tensor mask = adjacency_mask(Tensor::from_vector({kB, kT}, {0, 1, 0, 0, 0, 0, 0, 1}));
    NamedTensors p;
    fab->collect("fab", p);
    auto wrt = tensors_of(p);
    wrt.push_back(x);
    std::vector<Case> cases;
    cases.push_back({[=] { return (*fab)(x, Tensor(), true).output; }, wrt});
    for (auto mode : {MaskMode::kExclude, MaskMode::kMultiplyPostSoftmaxRenorm,
                      MaskMode::kMultiplyPreSoftmax}) {
      cases.push_back({[=] { return (*fab)(x, mask, true, mode).output; }, wrt});
    }
    out.push_back(run_cases("module", "frame_attention", cases, rng));
  }
  {
    auto intra = std::make_shared<IntraBranch>(kD, 8, 2, rng);
    const Tensor x = rand_tensor({kB, kT, kD}, rng);
    NamedTensors p;
    intra->collect("intra", p);
    auto wrt = tensors_of(p);
    wrt.push_back(x);
    out.push_back(
        run_cases("module", "intra_branch", {{[=] { return (*intra)(x, true); }, wrt}}, rng));
  }
  {
    auto be = std::make_shared<BoundaryEnhancement>(kD, 1, 8, 2, BoundaryHeadKind::kBoth, rng);
    const Tensor x = rand_tensor({kB, kT, kD}, rng);
    NamedTensors p;
    be->collect("be", p);
    auto wrt = tensors_of(p);
    wrt.push_back(x);
    out.push_back(run_cases(
        "module", "boundary_enhancement",
        {{[=] {
            const auto o = (*be)(x, true, 0.5);
            return concat({reshape(o.probability, {kB, kT, 1}), o.enhanced}, 2);
          },
          wrt}},
        rng));
  }
  {
    auto bfa = std::make_shared<BoundaryFrameAttention>(kD, 1, 2, rng);
    const Tensor x = rand_tensor({kB, kT, kD}, rng);
    const Tensor mask = adjacency_mask(Tensor::from_vector({kB, kT}, {0, 0, 1, 0, 1, 0, 0, 0}));
    NamedTensors p;
    bfa->collect("bfa", p);
    auto wrt = tensors_of(p);
    wrt.push_back(x);
    out.push_back(run_cases(
        "module", "boundary_frame_attention",
        {{[=] { return (*bfa)(x, mask, true, MaskMode::kExclude); }, wrt}}, rng));
  }
  for (auto v : {Variant::kBaseline, Variant::kFa, Variant::kFaBe, Variant::kBfaBe}) {
    out.push_back(model_entry(v, seed));
  }
  return out;
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed) {
  std::vector<GradcheckEntry> out;
  Rng rng(seed);
  for (std::string_view op : differentiable_ops()) {
    out.push_back(run_cases("op", std::string(op), op_cases(op, rng), rng));
  }
  for (auto& e : module_entries(seed)) out.push_back(std::move(e));
  return out;
}

}  // namespace bam
