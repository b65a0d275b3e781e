#include <gtest/gtest.h>

#include "dassf/autodiff.hpp"
#include "dassf/dysample.hpp"
#include "dassf/gradcheck_suite.hpp"
#include "support.hpp"

using namespace dassf;
using namespace dassf::support;

TEST(Backward, SumGivesOnes) {
  Tape t;
  Rng rng(1);
  const Var x = t.leaf(rand_d({2, 3, 4}, rng));
  const auto g = backward(t, t.sum(x));
  EXPECT_EQ(g.at(x.id), TensorD({2, 3, 4}, 1.0));
}

TEST(Backward, ReluOfNegativesGivesZeros) {
  Tape t;
  Rng rng(2);
  const Var x = t.leaf(rand_d({1, 2, 3, 3}, rng, -2.0, -0.1));
  const auto g = backward(t, t.sum(t.activation(x, Activation::relu)));
  EXPECT_EQ(g.at(x.id), TensorD({1, 2, 3, 3}, 0.0));
}

TEST(Backward, ConvMatchesCentralDifferences) {
  Rng rng(3);
  const TensorD w = rand_d({3, 2, 3, 3}, rng);
  const double err = gradcheck(
      [&](Tape& t, Var x) {
        ConvLayer<Var> p;
        p.weight = t.constant(w);
        p.padding = {0, 1, 1};
        return t.sum(t.conv2d(x, p));
      },
      rand_d({1, 2, 5, 5}, rng));
  EXPECT_LT(err, 1e-4);
}

TEST(Backward, NonScalarOutputIsContractError) {
  Tape t;
  const Var x = t.leaf(TensorD({2, 2}, 1.0));
  EXPECT_THROW(backward(t, t.scale(x, 2.0)), ContractError);
}

TEST(Backward, UnknownIdIsLookupError) {
  Tape t;
  t.leaf(TensorD({1}, 1.0));
  EXPECT_THROW(backward(t, Var{42}), LookupError);
}

TEST(Backward, ConstantsGetNoGradient) {
  Tape t;
  const Var x = t.leaf(TensorD({3}, 2.0));
  const Var c = t.constant(TensorD({3}, 5.0));
  const auto g = backward(t, t.sum(t.mul(x, c)));
  EXPECT_EQ(g.count(c.id), 0u);
  EXPECT_EQ(g.at(x.id), TensorD({3}, 5.0));
}

TEST(Backward, MaxPoolTieRoutesToFirstElement) {
  Tape t;
  const Var x = t.leaf(TensorD({1, 1, 2, 2}, 3.0));
  const auto g = backward(t, t.sum(t.pool2d(x, PoolMode::max, 2, 2)));
  EXPECT_EQ(g.at(x.id), TensorD({1, 1, 2, 2}, std::vector<double>{1, 0, 0, 0}));
}

TEST(Tape, RecordsInTopologicalOrder) {
  Tape t;
  Rng rng(4);
  const Var a = t.leaf(rand_d({1, 2, 3, 3}, rng));
  const Var b = t.activation(t.add(a, a), Activation::silu);
  t.sum(t.mul(b, a));
  for (const auto& r : t.records()) {
    for (std::size_t in : r.inputs) EXPECT_LT(in, r.output) << r.op;
  }
}

TEST(Tape, ReplayIsDeterministic) {
  Rng rng(5);
  const TensorD x0 = rand_d({1, 3, 4, 4}, rng);
  auto run = [&] {
    Tape t;
    const Var x = t.leaf(x0);
    return backward(t, t.sum(t.activation(t.mul(x, x), Activation::sigmoid))).at(x.id);
  };
  EXPECT_EQ(run(), run());
}

TEST(Gradcheck, IdentityIsExact) {
  Rng rng(6);
  EXPECT_LT(gradcheck([](Tape&, Var x) { return x; }, rand_d({2, 3}, rng)), 1e-10);
}

TEST(Gradcheck, HardSigmoidAwayFromKinks) {
  TensorD x({1, 6}, std::vector<double>{-0.8, -0.3, 0.0, 0.4, 0.9, -0.55});
  EXPECT_LT(gradcheck([](Tape& t, Var v) { return t.activation(v, Activation::hard_sigmoid); }, x), 1e-6);
}

TEST(Gradcheck, DySamplePipeline) {
  Rng rng(7);
  std::vector<TensorD> in = {rand_d({1, 4, 4, 4}, rng), rand_d({16, 4, 1, 1}, rng, -0.3, 0.3),
                             rand_d({16}, rng, -0.3, 0.3)};
  const auto rep = gradcheck(
      [](Tape& t, std::span<const Var> v) {
        DySampleParamsT<Var> p;
        p.offset_gen.weight = v[1];
        p.offset_gen.bias = v[2];
        p.scale = 2;
        p.groups = 2;
        return dysample_upsample(t, v[0], p);
      },
      in);
  EXPECT_LT(rep.max_rel_error, 1e-4);
  EXPECT_EQ(rep.per_input.size(), 3u);
}

TEST(Gradcheck, NonFiniteFunctionIsEvaluationError) {
  EXPECT_THROW(gradcheck([](Tape& t, Var x) { return t.scale(x, std::numeric_limits<double>::infinity()); },
                         TensorD({2}, 1.0)),
               EvaluationError);
}

TEST(Gradcheck, RejectsNonPositiveEps) {
  EXPECT_THROW(gradcheck([](Tape&, Var x) { return x; }, TensorD({2}, 1.0), 0.0), ParameterError);
}

TEST(Gradcheck, AbsurdStepIsDetected) {
  Rng rng(8);
  EXPECT_GT(gradcheck([](Tape& t, Var x) { return t.activation(x, Activation::sigmoid); }, rand_d({4}, rng), 10.0),
            1e-4);
}

TEST(AutodiffProperty, GradientOfSumIsSumOfGradients) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const TensorD x0 = rand_d({1, 2, 4, 4}, rng);
    auto grad_of = [&](int which) {
      Tape t;
      const Var x = t.leaf(x0);
      const Var f = t.sum(t.activation(x, Activation::silu));
      const Var g = t.sum(t.mul(x, x));
      const Var out = which == 0 ? f : which == 1 ? g : t.add(f, g);
      return backward(t, out).at(x.id);
    };
    EXPECT_LT(max_abs_diff(grad_of(2), add(grad_of(0), grad_of(1))), 1e-12);
  }
}

TEST(Suite, EveryModuleRuns) {
  const auto results = run_gradcheck_suite("all", 1);
  std::set<std::string> modules;
  for (const auto& r : results) {
    modules.insert(r.module);
    EXPECT_TRUE(r.pass) << r.module << "/" << r.op << " " << r.max_rel_error << " " << r.error;
  }
  EXPECT_EQ(modules.size(), gradcheck_modules().size());
}

TEST(Suite, UnknownModuleFails) { EXPECT_THROW(run_gradcheck_suite("neck", 1), ParameterError); }
