#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "support.hpp"

using namespace nsm;

namespace {

GRUParams random_gru(std::size_t in, std::size_t hid, std::uint64_t seed) {
  GRUParams p(in, hid);
  std::mt19937_64 rng(seed);
  for (auto* t : {&p.w_z, &p.u_z, &p.b_z, &p.w_r, &p.u_r, &p.b_r, &p.w_h, &p.u_h, &p.b_h}) t->fill_uniform(rng, -1, 1);
  return p;
}

// scalar-by-scalar gate equations
Vec reference_gru(const Vec& h, const Vec& x, const GRUParams& p) {
  const std::size_t H = h.size(), X = x.size();
  auto lin = [&](const Tensor& w, const Tensor& u, const Tensor& b, std::size_t i, const Vec& hh) {
    double s = b.data[i];
    for (std::size_t j = 0; j < X; ++j) s += w.at(i, j) * x[j];
    for (std::size_t j = 0; j < H; ++j) s += u.at(i, j) * hh[j];
    return s;
  };
  Vec z(H), r(H), rh(H), out(H);
  for (std::size_t i = 0; i < H; ++i) {
    z[i] = 1.0 / (1.0 + std::exp(-lin(p.w_z, p.u_z, p.b_z, i, h)));
    r[i] = 1.0 / (1.0 + std::exp(-lin(p.w_r, p.u_r, p.b_r, i, h)));
  }
  for (std::size_t i = 0; i < H; ++i) rh[i] = r[i] * h[i];
  for (std::size_t i = 0; i < H; ++i) {
    const double cand = std::tanh(lin(p.w_h, p.u_h, p.b_h, i, rh));
    out[i] = z[i] * h[i] + (1.0 - z[i]) * cand;
  }
  return out;
}

}  // namespace

TEST(GruStep, ZeroParamsKeepZeroState) {
  const GRUParams p(3, 2);
  const auto h = gru_step(Vec{0.0, 0.0}, Vec{1.0, -2.0, 0.5}, p);
  EXPECT_EQ(h, (Vec{0.0, 0.0}));
}

TEST(GruStep, MatchesScalarReference) {
  const auto p = random_gru(2, 2, 0);
  const Vec h = {0.3, -0.7}, x = {1.5, -0.25};
  const auto got = gru_step(h, x, p);
  const auto want = reference_gru(h, x, p);
  ASSERT_EQ(got.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
  EXPECT_EQ(gru_step(h, x, p), got);
}

TEST(GruStep, ResetGateActsBeforeCandidate) {
  // with z forced to 0 the output is the candidate; r = 0 must erase h's effect on it
  GRUParams p(1, 1);
  p.b_z.data = {-50.0};
  p.b_r.data = {-50.0};
  p.u_h.data = {3.0};
  p.w_h.data = {0.5};
  const auto out = gru_step(Vec{0.9}, Vec{1.0}, p);
  EXPECT_NEAR(out[0], std::tanh(0.5), 1e-12);
}

TEST(Attention, SingleStepGetsAllWeight) {
  const auto W = Tensor::matrix(2, 2), C = Tensor::matrix(2, 4);
  const auto r = attention(Vec{1.0, 2.0}, {Vec{0.5, 0.5}}, W, C);
  ASSERT_EQ(r.weights.size(), 1u);
  EXPECT_EQ(r.weights[0], 1.0);
  EXPECT_EQ(r.context, (Vec{0.5, 0.5}));
}

TEST(Attention, IdenticalOutputsSplitEvenly) {
  std::mt19937_64 rng(1);
  auto W = Tensor::matrix(3, 3);
  auto C = Tensor::matrix(3, 6);
  W.fill_uniform(rng, -1, 1);
  C.fill_uniform(rng, -1, 1);
  const Vec e = {0.1, -0.4, 0.8};
  const auto r = attention(Vec{1.0, 0.0, -1.0}, {e, e}, W, C);
  EXPECT_EQ(r.weights, (Vec{0.5, 0.5}));
}

TEST(Attention, MatchesScalarReference) {
  std::mt19937_64 rng(0);
  const std::size_t H = 3;
  auto W = Tensor::matrix(H, H);
  auto C = Tensor::matrix(H, 2 * H);
  W.fill_uniform(rng, -1, 1);
  C.fill_uniform(rng, -1, 1);
  const Vec u = {0.2, -0.5, 0.9};
  const std::vector<Vec> enc = {{0.1, 0.2, 0.3}, {-0.3, 0.0, 0.6}, {0.9, -0.9, 0.1}};
  Vec s(enc.size());
  for (std::size_t t = 0; t < enc.size(); ++t) {
    s[t] = 0.0;
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < H; ++j) s[t] += u[i] * W.at(i, j) * enc[t][j];
  }
  double z = 0.0;
  for (double v : s) z += std::exp(v);
  Vec a(enc.size()), ctx(H, 0.0), out(H);
  for (std::size_t t = 0; t < enc.size(); ++t) a[t] = std::exp(s[t]) / z;
  for (std::size_t t = 0; t < enc.size(); ++t)
    for (std::size_t i = 0; i < H; ++i) ctx[i] += a[t] * enc[t][i];
  for (std::size_t i = 0; i < H; ++i) {
    double v = 0.0;
    for (std::size_t j = 0; j < H; ++j) v += C.at(i, j) * u[j] + C.at(i, H + j) * ctx[j];
    out[i] = std::tanh(v);
  }
  const auto r = attention(u, enc, W, C);
  for (std::size_t t = 0; t < enc.size(); ++t) EXPECT_NEAR(r.weights[t], a[t], 1e-14);
  for (std::size_t i = 0; i < H; ++i) {
    EXPECT_NEAR(r.context[i], ctx[i], 1e-14);
    EXPECT_NEAR(r.output[i], out[i], 1e-14);
  }
}

TEST(MaskedSoftmax, Examples) {
  EXPECT_EQ(masked_softmax(Vec{0, 0, 0}, {true, true, false}), (Vec{0.5, 0.5, 0.0}));
  EXPECT_EQ(masked_softmax(Vec{-3.0, 40.0, 2.0}, {false, false, true}), (Vec{0.0, 0.0, 1.0}));
  const auto p = masked_softmax(Vec{1, 2, 3}, {true, true, true});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], std::exp(i + 1.0) / z, 1e-15);
  EXPECT_THROW(masked_softmax(Vec{1, 2}, {false, false}), ContractError);
  EXPECT_THROW(masked_softmax(Vec{1, 2}, {true}), ContractError);
}

TEST(MaskedSoftmax, ExactZerosSumToOneShiftInvariant) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t k = 1 + rng() % 12;
    Vec logits(k);
    std::vector<bool> mask(k);
    for (std::size_t i = 0; i < k; ++i) {
      logits[i] = n(rng);
      mask[i] = rng() % 3 != 0;
    }
    mask[rng() % k] = true;
    const auto p = masked_softmax(logits, mask);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!mask[i]) EXPECT_EQ(p[i], 0.0);
      s += p[i];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    const double c = n(rng) * 10;
    Vec shifted = logits;
    for (std::size_t i = 0; i < k; ++i)
      if (mask[i]) shifted[i] += c;
    const auto q = masked_softmax(shifted, mask);
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(q[i], p[i], 1e-12);
  }
}

TEST(Backprop, ZeroSeedGivesZeroGradient) {
  auto mp = make_mini_problem(GradCheckConfig{}, 0);
  Programmer prog(mp.model, mp.kb, 3);
  std::mt19937_64 rng(0);
  const auto ids = prog.sample(mp.item, rng).token_ids;
  auto grads = mp.model.params.zeros_like();
  Tape t(mp.model.params.bind(grads));
  t.backward(prog.log_prob(t, mp.item, ids), 0.0);
  EXPECT_EQ(grads.squared_norm(), 0.0);
}

TEST(Backprop, SharedParameterAccumulates) {
  auto w = Tensor::matrix(1, 1);
  w.data = {1.5};
  auto gw = Tensor::matrix(1, 1);
  Tape t(Tape::Binding{{&w, &gw}});
  const auto a = t.matvec(w, t.constant({2.0}));
  const auto b = t.matvec(w, t.constant({-3.0}));
  t.backward(t.dot(a, b));
  // d/dw (2w)(-3w) = -12 w
  EXPECT_DOUBLE_EQ(gw.data[0], -12.0 * 1.5);
}

TEST(Backprop, TapeContracts) {
  Tape plain;
  const auto x = plain.constant({1.0});
  EXPECT_THROW(plain.backward(x), ContractError);
  auto w = Tensor::vector(1);
  auto g = Tensor::vector(1);
  Tape t(Tape::Binding{{&w, &g}});
  const auto y = t.param(w);
  t.backward(y);
  EXPECT_THROW(t.backward(y), ContractError);
}

TEST(GradCheck, MiniatureModelBothObjectives) {
  for (std::uint64_t seed : {0u, 1u}) {
    for (auto obj : {Objective::Likelihood, Objective::PolicyGradient}) {
      GradCheckConfig cfg;
      cfg.objective = obj;
      const auto r = grad_check(cfg, seed);
      EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed << " worst " << r.worst_tensor;
      EXPECT_EQ(r.coordinates, make_mini_problem(cfg, seed).model.params.num_scalars());
    }
  }
}

TEST(GradCheck, NoProgramsMeansZeroError) {
  GradCheckConfig cfg;
  cfg.programs = 0;
  EXPECT_EQ(grad_check(cfg, 0).max_rel_error, 0.0);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0, 1e-5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-7, 1e-5), 1e-2);
  EXPECT_EQ(relative_error(0.0, 0.0, 1e-5), 0.0);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Model m(ModelDims{5, 7}, WordVocab({"what", "is"}), TokenVocab({"capital", "population"}), 3);
  m.params.init_uniform(42, 1.0 / 3.0);
  const auto text = serialize_model(m);
  std::istringstream in(text);
  const auto back = parse_model(in);
  EXPECT_TRUE(back.params == m.params);
  EXPECT_EQ(back.words.items, m.words.items);
  EXPECT_EQ(back.tokens.items, m.tokens.items);
  EXPECT_EQ(serialize_model(back), text);

  const auto path = (std::filesystem::temp_directory_path() / "nsm_ckpt_test.txt").string();
  save_model(m, path);
  EXPECT_TRUE(load_model(path).params == m.params);
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsDamage) {
  Model m(ModelDims{2, 3}, WordVocab({"a"}), TokenVocab({"p"}), 0);
  auto text = serialize_model(m);
  std::istringstream bad_magic("not-a-checkpoint 1\n");
  EXPECT_THROW(parse_model(bad_magic), FormatError);
  std::istringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(parse_model(truncated), FormatError);
}

TEST(Kernels, Deterministic) {
  const auto p = random_gru(4, 6, 5);
  const Vec h(6, 0.25), x = {1, 2, 3, 4};
  EXPECT_EQ(gru_step(h, x, p), gru_step(h, x, p));
}
