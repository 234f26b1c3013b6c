#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace ddcm;

namespace {

LinearObservation half_mask(const GmmModel& model, VecView x0) {
  LinearObservation obs{LinearOperator::mask(model.dim(), {0, 2, 4, 6}), {}, 0.0};
  obs.y = obs.op.apply(x0);
  return obs;
}

}  // namespace

TEST(ConditionalPolicies, StreamsDecodeWithoutObservation) {
  const Schedule sched = build_schedule(50, 1e-3, 0.1);
  std::mt19937_64 gen(3);
  const GmmModel model(test::random_gmm(gen, 8), sched);
  const Codec codec(test::uniform_config(sched, 32), model);
  RandomStream rng(4);
  const Vec x0 = model.sample_prior(rng);
  const auto obs = half_mask(model, x0);

  LinearInversePolicy inverse(obs, rng);
  PosteriorLossPolicy posterior(gmm_observation_gradient(model, obs), rng);
  PosteriorLossPolicy subset(gmm_observation_gradient(model, obs), rng, 8);
  PosteriorLossPolicy clean(clean_target_gradient(x0), rng);
  for (NoisePolicy* p : std::initializer_list<NoisePolicy*>{&inverse, &posterior, &subset, &clean}) {
    const auto res = codec.generate(*p);
    EXPECT_EQ(res.stream.payload_bit_count, 49u * 5u);
    EXPECT_EQ(decompress(deserialize(serialize(res.stream)), model), res.reconstruction);
  }
  EXPECT_EQ(inverse.max_evaluated(), 32u);
  EXPECT_EQ(posterior.max_evaluated(), 32u);
  EXPECT_EQ(subset.max_evaluated(), 8u);
}

TEST(ConditionalPolicies, RandomInitialIndexIsEncoded) {
  const Schedule sched = build_schedule(20, 1e-3, 0.2);
  std::mt19937_64 gen(5);
  const GmmModel model(test::random_gmm(gen, 4), sched);
  const Codec codec(test::uniform_config(sched, 16, 1, 2, 7, 100), model);
  RandomStream rng(6);
  std::set<std::uint32_t> inits;
  for (int n = 0; n < 20; ++n) {
    PosteriorLossPolicy p(clean_target_gradient(Vec(4, 0.0)), rng);
    const auto res = codec.generate(p);
    inits.insert(res.trajectory.init_index);
    EXPECT_EQ(decompress(res.stream, model), res.reconstruction);
  }
  EXPECT_GT(inits.size(), 10u);
}

TEST(ConditionalPolicies, InpaintingMatchesObservedCoordinates) {
  const Schedule sched = build_schedule(100, 1e-3, 0.05);
  std::mt19937_64 gen(7);
  const GmmModel model(test::random_gmm(gen, 8), sched);
  const Codec codec(test::uniform_config(sched, 1024), model);
  RandomStream rng(8);
  double observed_err = 0.0, hidden_err = 0.0;
  for (int n = 0; n < 20; ++n) {
    const Vec x0 = model.sample_prior(rng);
    const auto obs = half_mask(model, x0);
    LinearInversePolicy p(obs, rng);
    const Vec out = codec.generate(p).reconstruction;
    for (std::size_t j = 0; j < 8; ++j) (j % 2 == 0 ? observed_err : hidden_err) += std::pow(out[j] - x0[j], 2);
  }
  EXPECT_LT(observed_err, 0.5 * hidden_err);
}

TEST(ConditionalPolicies, RestorationRecordsBranches) {
  const Schedule sched = build_schedule(30, 1e-3, 0.1);
  std::mt19937_64 gen(9);
  const GmmModel model(test::random_gmm(gen, 4), sched);
  const Codec codec(test::uniform_config(sched, 16), model);
  RandomStream rng(10);
  const Vec x0 = model.sample_prior(rng);
  const auto quality = [&model](VecView x) { return -model.log_density(x, 0) / 4.0; };
  RestorationPolicy p(x0, 0.5, quality, rng);
  const auto res = codec.generate(p);
  EXPECT_EQ(p.branches.size(), 29u);
  EXPECT_EQ(decompress(res.stream, model), res.reconstruction);
}

TEST(ConditionalPolicies, GuidanceShiftsClassProbability) {
  const Schedule sched = build_schedule(100, 1e-3, 0.05);
  const GmmModel model(test::two_class_gmm(4, 1.0), sched);
  const Codec codec(test::uniform_config(sched, 64), model);
  RandomStream rng(11);
  double random = 0.0, ccg = 0.0, ccfg = 0.0;
  const int n = 100;
  for (int s = 0; s < n; ++s) {
    RandomPolicy r(rng);
    random += std::exp(model.class_logprob(codec.generate(r).reconstruction, 0, 1));
    CcgPolicy g(gmm_classifier(model, codec.schedule(), 1), 64, rng);
    const auto res = codec.generate(g);
    ccg += std::exp(model.class_logprob(res.reconstruction, 0, 1));
    EXPECT_EQ(decompress(res.stream, model), res.reconstruction);
    CcfgPolicy f(std::string("1"), 64, rng);
    const auto res2 = codec.generate(f);
    ccfg += std::exp(model.class_logprob(res2.reconstruction, 0, 1));
    EXPECT_EQ(decompress(res2.stream, model), res2.reconstruction);
  }
  EXPECT_GT(ccg / n, random / n + 0.1);
  EXPECT_GT(ccfg / n, random / n + 0.1);
}
