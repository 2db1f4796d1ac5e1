#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mdme/embedding.hpp"
#include "mdme/errors.hpp"
#include "mdme/gradcheck.hpp"
#include "mdme/objectives.hpp"
#include "mdme/presets.hpp"
#include "test_util.hpp"

using namespace mdme;
using mdme::testing::random_tensor;

namespace {

// Plain-loop Shannon entropy in bits, used as the oracle.
double entropy_oracle(std::span<const double> v) {
  double total = 0.0;
  for (double x : v) total += x * x;
  if (total == 0.0) return 0.0;
  double s = 0.0;
  for (double x : v) {
    const double p = x * x / total;
    if (p > 0.0) s -= p * std::log2(p);
  }
  return s;
}

MdmeConfig tiny_config() {
  MdmeConfig c;
  c.history = 5;
  c.goal_dim = 4;
  c.conv_channels = {8, 4, 4};
  c.levels = 1;
  c.encoder_hidden = {6};
  c.latent = 3;
  c.decoder_hidden = {7};
  c.action_dim = 2;
  c.proprio_dim = 3;
  return c;
}

std::vector<GoalWindow> random_windows(const MdmeConfig& c, std::size_t count, Rng& rng, double range = 1.0) {
  std::vector<GoalWindow> out;
  for (std::size_t b = 0; b < count; ++b) {
    GoalWindow w;
    w.history = c.history;
    w.goal_dim = c.goal_dim;
    for (std::size_t i = 0; i < c.history * c.goal_dim; ++i) w.values.push_back(rng.uniform(-range, range));
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<DiffTensor> parameter_list(const MdmeModel& m) {
  std::vector<DiffTensor> out;
  for (auto& [name, t] : m.named_parameters()) out.push_back(t);
  return out;
}

}  // namespace

TEST_CASE("subband entropy examples") {
  CHECK(subband_entropy(DiffTensor::matrix(2, 2, {1, 0, 0, 0})).item() == doctest::Approx(0.0));
  CHECK(subband_entropy(DiffTensor::matrix(2, 2, {1, 1, 1, 1})).item() == doctest::Approx(2.0).epsilon(1e-12));
  const double expect = -(0.36 * std::log2(0.36) + 0.64 * std::log2(0.64));
  CHECK(subband_entropy(DiffTensor::matrix(1, 2, {3, 4})).item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(subband_entropy(DiffTensor::zeros({3, 3})).item() == 0.0);
}

TEST_CASE("entropy bounds, single spike and uniform over 1000 random subbands") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = 1 + rng.below(12), c = 1 + rng.below(12);
    const double n = static_cast<double>(r * c);
    std::vector<double> v(r * c);
    const int kind = trial % 4;
    for (auto& x : v) x = rng.normal() * std::pow(10.0, rng.uniform(-3, 3));
    if (kind == 1)
      for (auto& x : v)
        if (rng.uniform() < 0.8) x = 0.0;
    const DiffTensor t = DiffTensor::matrix(r, c, v);
    const double s = subband_entropy(t).item();
    REQUIRE(s >= 0.0);
    REQUIRE(s <= std::log2(n) + 1e-12);
    CHECK(std::abs(s - entropy_oracle(v)) < 1e-9);

    std::vector<double> spike(r * c, 0.0);
    spike[rng.below(r * c)] = rng.uniform(0.1, 5.0) * (rng.uniform() < 0.5 ? -1 : 1);
    REQUIRE(subband_entropy(DiffTensor::matrix(r, c, spike)).item() == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> flat(r * c);
    const double a = rng.uniform(0.1, 5.0);
    for (auto& x : flat) x = rng.uniform() < 0.5 ? a : -a;
    REQUIRE(std::abs(subband_entropy(DiffTensor::matrix(r, c, flat)).item() - std::log2(n)) < 1e-9);
  }
}

TEST_CASE("entropy is invariant to positive scaling of raw DWT subbands") {
  Rng rng(5);
  const auto f = db2_filters();
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor(rng, {25, 25});
    const double k = std::pow(10.0, rng.uniform(-4, 4));
    const auto p1 = dwt2d_multilevel(x, 4, f);
    const auto p2 = dwt2d_multilevel(scale(x, k), 4, f);
    const auto b1 = p1.subbands(), b2 = p2.subbands();
    REQUIRE(b1.size() == 13);
    for (std::size_t i = 0; i < b1.size(); ++i)
      REQUIRE(std::abs(subband_entropy(b1[i]).item() - subband_entropy(b2[i]).item()) < 1e-9);
  }
}

TEST_CASE("entropy vector length is 1 + 3J") {
  const auto f = db2_filters();
  Rng rng(3);
  for (std::size_t j = 1; j <= 4; ++j) {
    const auto e = entropy_vector(dwt2d_multilevel(random_tensor(rng, {25, 25}), j, f));
    CHECK(e.shape() == Shape{1, 1 + 3 * j});
    for (auto v : e.data()) CHECK(v >= 0.0);
  }
}

TEST_CASE("preset dimensionality") {
  const auto quad = load_run_config("quadruped").model;
  CHECK(quad.history == 25);
  CHECK(quad.phase_channels() == 25);
  CHECK(quad.levels == 4);
  CHECK(quad.latent == 32);
  CHECK(quad.action_dim == 12);
  CHECK(pyramid_coefficient_count(25, 25, 4) == 919);
  MdmeModel qm(quad, Ablation::full, 1);
  CHECK(qm.structured_width() == 13);
  CHECK(MdmeModel(quad, Ablation::no_entropy, 1).structured_width() == 919);

  const auto hum = load_run_config("humanoid-h1").model;
  CHECK(hum.history == 5);
  CHECK(hum.phase_channels() == 15);
  CHECK(hum.levels == 2);
  CHECK(hum.latent == 64);
  CHECK(pyramid_coefficient_count(15, 5, 2) == 180);
  CHECK(MdmeModel(hum, Ablation::full, 1).structured_width() == 7);
  CHECK(MdmeModel(hum, Ablation::no_entropy, 1).structured_width() == 180);

  Rng rng(1);
  const auto windows = random_windows(quad, 2, rng);
  const auto e = encode_structured(windows, qm.params(), qm.config(), db2_filters(), NormMode::train);
  CHECK(e.shape() == Shape{2, 13});
}

TEST_CASE("kl closed forms") {
  auto latent = [](std::vector<double> mu, std::vector<double> sigma) {
    StochasticLatent l;
    const std::size_t m = mu.size();
    std::vector<double> ls;
    for (double s : sigma) ls.push_back(std::log(s));
    l.mu = DiffTensor::matrix(1, m, mu);
    l.log_sigma = DiffTensor::matrix(1, m, ls);
    l.z = l.mu;
    return l;
  };
  CHECK(kl_to_standard_normal(latent({0, 0}, {1, 1})).item() == doctest::Approx(0.0));
  CHECK(kl_to_standard_normal(latent({1}, {1})).item() == doctest::Approx(0.5));
  CHECK(kl_to_standard_normal(latent({0}, {2})).item() ==
        doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))).epsilon(1e-12));
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> mu, sigma;
    for (int k = 0; k < 4; ++k) {
      mu.push_back(rng.uniform(-3, 3));
      sigma.push_back(std::exp(rng.uniform(-3, 2)));
    }
    CHECK(kl_to_standard_normal(latent(mu, sigma)).item() >= 0.0);
  }
}

TEST_CASE("reparameterised samples match the target moments") {
  MdmeConfig c = tiny_config();
  MdmeModel m(c, Ablation::full, 4);
  auto& p = m.params();
  const std::vector<double> mu{0.7, -1.3, 0.0};
  const std::vector<double> sigma{0.5, 2.0, 1.0};
  std::fill(p.mu_head.w.mutable_data().begin(), p.mu_head.w.mutable_data().end(), 0.0);
  std::fill(p.log_sigma_head.w.mutable_data().begin(), p.log_sigma_head.w.mutable_data().end(), 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    p.mu_head.b.mutable_data()[k] = mu[k];
    p.log_sigma_head.b.mutable_data()[k] = std::log(sigma[k]);
  }
  Rng wr(1);
  const auto windows = random_windows(c, 1, wr);
  const std::vector<GoalWindow> batch(10000, windows[0]);
  Rng rng(99);
  const auto l = encode_unstructured(batch, p, c, rng, LatentMode::sample);
  const double n = 10000.0;
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < 10000; ++i) {
      const double z = l.z.at(i * 3 + k);
      s += z;
      s2 += z * z;
    }
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    CHECK(std::abs(mean - mu[k]) < 4.0 * sigma[k] / 100.0);
    CHECK(std::abs(sd - sigma[k]) < 0.05 * sigma[k]);
  }

  Rng r1(3), r2(3);
  const auto a = encode_unstructured(windows, p, c, r1, LatentMode::mean);
  const auto b = encode_unstructured(windows, p, c, r2, LatentMode::mean);
  CHECK(std::equal(a.z.data().begin(), a.z.data().end(), b.z.data().begin()));
  for (std::size_t k = 0; k < 3; ++k) CHECK(a.z.at(k) == mu[k]);
}

TEST_CASE("gradient of |z|^2 through the reparameterisation with frozen noise") {
  Rng rng(8);
  for (int seed = 0; seed < 5; ++seed) {
    const auto eps = random_tensor(rng, {2, 3});
    const auto log_sigma = random_tensor(rng, {2, 3}, -1, 1);
    const auto mu = random_tensor(rng, {2, 3}, -2, 2);
    const double err = check_gradients(
        [&](const DiffTensor& m) { return sum(square(add(m, mul(exp(log_sigma), eps)))); }, mu);
    CHECK(err < 1e-4);
    const double err_sigma = check_gradients(
        [&](const DiffTensor& ls) { return sum(square(add(mu, mul(exp(ls), eps)))); }, log_sigma);
    CHECK(err_sigma < 1e-4);
  }
}

TEST_CASE("non-finite encoder output names the layer") {
  MdmeConfig c = tiny_config();
  MdmeModel m(c, Ablation::full, 1);
  m.params().mu_head.b.mutable_data()[0] = std::numeric_limits<double>::infinity();
  Rng rng(1);
  const auto w = random_windows(c, 1, rng);
  try {
    encode_unstructured(w, m.params(), c, rng, LatentMode::mean);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("encoder.mu") != std::string::npos);
  }
}

TEST_CASE("decoder: zero output layer, widths and mismatch") {
  MdmeConfig c = tiny_config();
  MdmeModel m(c, Ablation::full, 2);
  CHECK(m.decoder_input_width() == (1 + 3 * c.levels) + c.latent + c.goal_dim + c.proprio_dim + c.action_dim);
  CHECK(c.decoder_output() == 2);
  auto& p = m.params();
  std::fill(p.output.w.mutable_data().begin(), p.output.w.mutable_data().end(), 0.0);
  const auto zero = [](std::size_t n) { return DiffTensor::zeros({1, n}); };
  const auto a = decode(zero(4), zero(3), zero(4), zero(3), zero(2), p, c);
  CHECK(a.shape() == Shape{1, 2});
  for (double v : a.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(decode(zero(5), zero(3), zero(4), zero(3), zero(2), p, c), ConfigError);

  MdmeModel fresh(c, Ablation::full, 3);
  Rng rng(4);
  for (int seed = 0; seed < 5; ++seed) {
    const auto zv = random_tensor(rng, {1, 3});
    const auto g = random_tensor(rng, {1, 4});
    const auto pr = random_tensor(rng, {1, 3});
    const auto pa = random_tensor(rng, {1, 2});
    const auto zw = random_tensor(rng, {1, 4}, 0, 2);
    const double err = check_gradients(
        [&](const DiffTensor& x) { return sum(square(decode(x, zv, g, pr, pa, fresh.params(), c))); }, zw);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("structured encoder gradient check on a tiny config") {
  MdmeConfig c = tiny_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MdmeModel m(c, Ablation::full, seed);
    Rng rng(seed * 31);
    const auto windows = random_windows(c, 3, rng);
    const auto w = random_tensor(rng, {3, 4});
    std::vector<DiffTensor> conv;
    for (auto& s : m.params().conv) {
      conv.push_back(s.w);
      conv.push_back(s.gamma);
      conv.push_back(s.beta);
    }
    const auto f = db2_filters();
    const auto r = check_gradients(
        [&] { return sum(mul(encode_structured(windows, m.params(), c, f, NormMode::train), w)); }, conv, 1e-5);
    INFO("seed " << seed << " tensor " << r.worst_tensor << " index " << r.worst_index << " analytic " << r.analytic << " numeric " << r.numeric);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("full forward plus imitation loss gradient check") {
  MdmeConfig c = tiny_config();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MdmeModel m(c, Ablation::full, seed);
    Rng data(seed * 7);
    const auto windows = random_windows(c, 3, data);
    const auto proprio = random_tensor(data, {3, 3});
    const auto prev = random_tensor(data, {3, 2});
    const auto target = random_tensor(data, {3, 2});
    auto params = parameter_list(m);
    const auto r = check_gradients(
        [&] {
          Rng rng(seed);  // identical noise on every evaluation
          auto out = m.forward(windows, proprio, prev, rng, LatentMode::sample, NormMode::train);
          return imitation_loss(out.action, target, out.latent, 0.1);
        },
        params, 1e-5);
    INFO("seed " << seed << " tensor " << r.worst_tensor << " index " << r.worst_index << " analytic " << r.analytic
                 << " numeric " << r.numeric);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("forward is deterministic in mean mode and finite for bounded inputs") {
  MdmeConfig c = tiny_config();
  MdmeModel m(c, Ablation::full, 9);
  Rng data(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto windows = random_windows(c, 4, data, 100.0);
    Rng r1(1), r2(2);
    const auto a = m.forward(windows, DiffTensor(), DiffTensor(), r1, LatentMode::mean, NormMode::eval);
    const auto b = m.forward(windows, DiffTensor(), DiffTensor(), r2, LatentMode::mean, NormMode::eval);
    REQUIRE(std::equal(a.action.data().begin(), a.action.data().end(), b.action.data().begin()));
    for (double v : a.action.data()) REQUIRE(std::isfinite(v));
    const auto s = m.forward(windows, DiffTensor(), DiffTensor(), r1, LatentMode::sample, NormMode::train);
    for (double v : s.action.data()) REQUIRE(std::isfinite(v));
    for (double v : s.structured.data()) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("ablation variants") {
  MdmeConfig c = tiny_config();
  CHECK(ablation_names().size() == 7);
  for (const auto& name : ablation_names()) CHECK(ablation_name(parse_ablation(name)) == name);
  try {
    parse_ablation("no-such-thing");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("no-history") != std::string::npos);
  }

  const std::size_t tail = c.proprio_dim + c.action_dim;
  CHECK(MdmeModel(c, Ablation::full, 1).decoder_input_width() == 4 + 3 + 4 + tail);
  CHECK(MdmeModel(c, Ablation::vae_only, 1).decoder_input_width() == 3 + 4 + tail);
  CHECK(MdmeModel(c, Ablation::wavelet_only, 1).decoder_input_width() == 4 + 4 + tail);
  CHECK(MdmeModel(c, Ablation::no_latest_frame, 1).decoder_input_width() == 4 + 3 + tail);
  CHECK(MdmeModel(c, Ablation::no_entropy, 1).structured_width() == pyramid_coefficient_count(4, 5, 1));
  CHECK(MdmeModel(c, Ablation::fft_instead_of_dwt, 1).structured_width() == 4 * 3);
  CHECK(MdmeModel(c, Ablation::vae_only, 1).params().conv.empty());
  CHECK(MdmeModel(c, Ablation::wavelet_only, 1).params().encoder.empty());

  MdmeConfig c8 = c;
  c8.history = 8;
  c8.conv_channels = {8, 4, 4};
  c8.levels = 1;
  CHECK(MdmeModel(c8, Ablation::no_history, 1).config().history == 1);

  Rng rng(5);
  for (const auto& name : ablation_names()) {
    const auto a = parse_ablation(name);
    MdmeModel m(c, a, 3);
    const auto windows = random_windows(m.config(), 2, rng);
    Rng r(1);
    const auto out = m.forward(windows, DiffTensor(), DiffTensor(), r, LatentMode::sample, NormMode::train);
    CHECK(out.action.shape() == Shape{2, 2});
    if (m.uses_structured()) CHECK(out.structured.shape() == Shape{2, m.structured_width()});
  }
}

TEST_CASE("fft magnitude matches a direct DFT") {
  Rng rng(6);
  const auto x = random_tensor(rng, {3, 7});
  const auto mag = fft_magnitude(x);
  REQUIRE(mag.shape() == Shape{1, 3 * 4});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t f = 0; f < 4; ++f) {
      double re = 0.0, im = 0.0;
      for (std::size_t t = 0; t < 7; ++t) {
        const double a = 2.0 * std::numbers::pi * f * t / 7.0;
        re += x.at(r * 7 + t) * std::cos(a);
        im -= x.at(r * 7 + t) * std::sin(a);
      }
      CHECK(mag.at(r * 4 + f) == doctest::Approx(std::sqrt(re * re + im * im + 1e-12)).epsilon(1e-12));
    }
}
