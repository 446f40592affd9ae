#include <cmath>
#include <random>

#include "doctest.h"
#include "mixer.hpp"
#include "oracle_values.hpp"
#include "test_util.hpp"

using namespace statesmix;

TEST_CASE("entropy") {
  CHECK(shannon_entropy(std::vector<float>{1, 0, 0}) == 0.0);
  CHECK(shannon_entropy(std::vector<float>(50, 0.02f)) == doctest::Approx(std::log(50.0)).epsilon(1e-6));
  CHECK(shannon_entropy(std::vector<float>{0.5f, 0.5f}) == doctest::Approx(0.6931).epsilon(1e-4));
  std::vector<float> scratch(4);
  CHECK(softmax_entropy(std::vector<float>{0, 0, 0, 0}, scratch) == doctest::Approx(std::log(4.0)));
  const std::vector<float> l = {2.0f, -1.0f, 0.5f, 0.0f};
  std::vector<float> p(4);
  softmax(l, p);
  CHECK(softmax_entropy(l, scratch) == doctest::Approx(shannon_entropy(p)).epsilon(1e-6));
}

TEST_CASE("adaptive scale") {
  const MixConfig cfg;
  for (size_t i = 0; i < std::size(oracle::kScaleInputs); ++i) {
    CHECK(adaptive_scale(oracle::kScaleInputs[i], cfg) ==
          doctest::Approx(oracle::kScaleOutputs[i]).epsilon(1e-12));
  }
  double prev = 0;
  for (double h = 0; h < 25; h += 0.1) {
    const double s = adaptive_scale(h, cfg);
    CHECK(s >= prev);
    prev = s;
  }
  CHECK(adaptive_scale(100, cfg) == 2.5);
}

TEST_CASE("softmax closed forms") {
  std::vector<float> p(2);
  softmax(std::vector<float>{0.0f, std::log(3.0f)}, p);
  CHECK(p[0] == doctest::Approx(0.25));
  CHECK(p[1] == doctest::Approx(0.75));
  std::vector<float> u(5);
  softmax(std::vector<float>(5, 3.0f), u);
  for (float x : u) CHECK(x == doctest::Approx(0.2));
  const std::vector<float> l = {1.5f, -2.0f, 0.25f, 7.0f};
  std::vector<float> a(4), b(4), shifted(4);
  for (size_t i = 0; i < 4; ++i) shifted[i] = l[i] + 16.0f;  // exact in float
  softmax(l, a);
  softmax(shifted, b);
  CHECK(a == b);
  std::vector<float> bad = {0.0f, NAN};
  CHECK(testing::error_of([&] { softmax(bad, a); }) == ErrorCode::kNumericFault);
}

TEST_CASE("Q16 boundary makes offsets cancel exactly") {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0, 3);
  std::vector<float> l(300);
  for (auto& x : l) x = n(rng);
  std::vector<int32_t> q(300), q2(300);
  logits_to_q16(l, q);
  for (size_t i = 0; i < q.size(); ++i) q2[i] = q[i] + 123457;
  std::vector<float> c1(300), c2(300);
  centered_from_q16(q, c1);
  centered_from_q16(q2, c2);
  CHECK(c1 == c2);
  CHECK(*std::max_element(c1.begin(), c1.end()) == 0.0f);
  logits_to_q16(std::vector<float>{1e9f, -1e9f}, q);
  CHECK(q[0] == static_cast<int32_t>(16384.0 * 65536));
  CHECK(q[1] == -static_cast<int32_t>(16384.0 * 65536));
}

TEST_CASE("combine logits") {
  const std::vector<float> ssm = {0.5f, -0.5f, 1.0f, 0.0f};
  const std::vector<float> freq = {0.0f, 0.0f, 0.0f, 0.0f};
  BiasSet none;
  std::vector<float> out(4);
  combine_logits(ssm, freq, none, out);
  CHECK(out == ssm);

  BiasSet b;
  b.scale = 2.0f;
  b.ngram = {{1, 0.25f}, {1, 0.5f}, {3, 1.0f}};
  b.lz = LzPrediction{2, 0.75f};
  b.recency = {{0, 0.05f}};
  const std::vector<float> f = {0.1f, 0.2f, 0.3f, 0.4f};
  combine_logits(ssm, f, b, out);
  CHECK(out[0] == doctest::Approx(0.5 + 2 * 0.1 + 0.05));
  CHECK(out[1] == doctest::Approx(-0.5 + 2 * 0.2 + 0.25 + 0.5));
  CHECK(out[2] == doctest::Approx(1.0 + 2 * 0.3 + 0.75));
  CHECK(out[3] == doctest::Approx(0.0 + 2 * 0.4 + 1.0));

  // First token: no SSM term and s = 1, so only count evidence remains.
  BiasSet first;
  combine_logits({}, f, first, out);
  CHECK(out == f);
}

TEST_CASE("unseen tokens keep their relative odds") {
  const std::vector<float> ssm = {0.3f, -0.1f, 0.7f, 0.2f, -0.4f};
  const std::vector<float> zero(5, 0.0f);
  BiasSet b;
  b.scale = 1.3f;
  b.ngram = {{0, 2.0f}, {2, 0.4f}};
  b.lz = LzPrediction{0, 1.0f};
  std::vector<float> plain(5), mixed(5), p(5), q(5);
  combine_logits(ssm, zero, BiasSet{}, plain);
  combine_logits(ssm, zero, b, mixed);
  softmax(plain, p);
  softmax(mixed, q);
  CHECK(q[1] / q[3] == doctest::Approx(p[1] / p[3]).epsilon(1e-5));
  CHECK(q[4] / q[3] == doctest::Approx(p[4] / p[3]).epsilon(1e-5));
}

TEST_CASE("argmax dominance") {
  std::vector<float> ssm = {2.0f, 1.0f, 0.0f};
  BiasSet b;
  b.ngram = {{2, 2.5f}};
  std::vector<float> out(3);
  combine_logits(ssm, std::vector<float>(3, 0.0f), b, out);
  CHECK(std::max_element(out.begin(), out.end()) - out.begin() == 2);
}

TEST_CASE("mix config validation") {
  MixConfig m;
  m.s_min = 3.0;
  CHECK(testing::error_of([&] { m.validate(); }) == ErrorCode::kInvalidArgument);
}
