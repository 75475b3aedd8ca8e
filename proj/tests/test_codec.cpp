#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "dsqn/codec.hpp"
#include "dsqn/error.hpp"
#include "dsqn/rng.hpp"

using namespace dsqn;
using namespace dsqn::codec;

TEST_CASE("signed split") {
  CHECK(signed_split(std::vector<double>{-0.3}) == std::vector<double>{0.0, 0.3});
  CHECK(signed_split(std::vector<double>{0.7}) == std::vector<double>{0.7, 0.0});
  CHECK(signed_split(std::vector<double>{0.0}) == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(signed_split(std::vector<double>{std::nan("")}), Error);
  CHECK_THROWS_AS(signed_split(std::vector<double>{std::numeric_limits<double>::infinity()}), Error);
}

TEST_CASE("signed split pairs have at most one nonzero slot") {
  Rng rng(3);
  std::vector<double> obs(50);
  for (auto& v : obs) v = rng.uniform(-5.0, 5.0);
  obs[7] = 0.0;
  const auto out = signed_split(obs);
  REQUIRE(out.size() == 100);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    CHECK(out[2 * i] >= 0.0);
    CHECK(out[2 * i + 1] >= 0.0);
    CHECK((out[2 * i] == 0.0 || out[2 * i + 1] == 0.0));
    CHECK(out[2 * i] - out[2 * i + 1] == obs[i]);
  }
}

TEST_CASE("rate encoding at certain and impossible rates") {
  EncoderConfig cfg;
  cfg.sim_ticks = 10;
  Rng rng(1);
  const auto train = rate_encode(std::vector<double>{1.0, 0.0, 3.0, 0.0}, cfg, rng);
  CHECK(train.count(0) == 10);
  CHECK(train.count(1) == 0);
  CHECK(train.count(2) == 10);  // clamped to 1
  CHECK(train.count(3) == 0);
}

TEST_CASE("rate encoding statistics within 3 sigma") {
  EncoderConfig cfg;
  cfg.sim_ticks = 10000;
  Rng rng(2024);
  const std::vector<double> p{0.1, 0.5, 0.9};
  const auto train = rate_encode(p, cfg, rng);
  for (int i = 0; i < 3; ++i) {
    const double n = cfg.sim_ticks;
    const double sigma = std::sqrt(n * p[i] * (1 - p[i]));
    CHECK(std::abs(static_cast<double>(train.count(i)) - n * p[i]) <= 3 * sigma);
  }
  CHECK(std::abs(static_cast<double>(train.count(1)) - 5000.0) <= 150.0);
}

TEST_CASE("rate encoding applies per-feature scales and is seed deterministic") {
  EncoderConfig cfg;
  cfg.sim_ticks = 20;
  cfg.per_feature_scale = {2.0, 0.5};
  const std::vector<double> obs{0.5, -3.0};
  Rng a(9), b(9);
  const auto ta = encode_observation(obs, cfg, a);
  const auto tb = encode_observation(obs, cfg, b);
  CHECK(ta == tb);
  CHECK(ta.count(0) == 20);  // 0.5 * 2 = 1
  CHECK(ta.count(1) == 0);
  CHECK(ta.count(2) == 0);
  CHECK(ta.count(3) == 20);  // 3 * 0.5 = 1.5, clamped
}

TEST_CASE("encoder config validation") {
  EncoderConfig cfg;
  cfg.sim_ticks = 0;
  CHECK_THROWS_AS(cfg.validate(4), Error);
  cfg.sim_ticks = 10;
  cfg.per_feature_scale = {1.0, 2.0};
  CHECK_THROWS_AS(cfg.validate(4), Error);
  cfg.per_feature_scale = {1.0, -2.0, 1.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(4), Error);
  cfg.per_feature_scale = {1.0, 2.0, 1.0, 1.0};
  CHECK_NOTHROW(cfg.validate(4));
}

TEST_CASE("spike list conversion") {
  SpikeTrain zero(5, 4);
  CHECK(train_to_spike_list(zero).events.empty());

  SpikeTrain one(5, 4);
  one.at(3, 1) = 1;
  const auto list = train_to_spike_list(one);
  REQUIRE(list.events.size() == 1);
  CHECK(list.events[0] == SpikeEvent{1, 3});

  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    SpikeTrain t(10, 8);
    for (auto& v : t.data) v = rng.bernoulli(0.3) ? 1 : 0;
    const auto l = train_to_spike_list(t);
    for (std::size_t i = 1; i < l.events.size(); ++i) {
      const auto& p = l.events[i - 1];
      const auto& q = l.events[i];
      CHECK((p.tick < q.tick || (p.tick == q.tick && p.neuron < q.neuron)));
    }
    CHECK(l.events.size() == t.count());
    CHECK(list_to_train(l) == t);
  }
}

TEST_CASE("malformed spike lists are rejected") {
  SpikeList l{5, 4, {{1, 2}, {0, 2}}};
  CHECK_THROWS_AS(list_to_train(l), Error);
  l.events = {{4, 0}};
  CHECK_THROWS_AS(list_to_train(l), Error);
  l.events = {{0, 5}};
  CHECK_THROWS_AS(list_to_train(l), Error);
  l.events = {{1, 1}, {1, 1}};
  CHECK_THROWS_AS(list_to_train(l), Error);
}

TEST_CASE("spike list csv") {
  SpikeTrain t(3, 2);
  t.at(0, 1) = 1;
  t.at(2, 0) = 1;
  std::ostringstream out;
  write_spike_list_csv(out, train_to_spike_list(t));
  CHECK(out.str() == "neuron_id,tick\n1,0\n0,2\n");
}

TEST_CASE("decode action") {
  CHECK(decode_action(std::vector<double>{3.2, 1.1}) == 0);
  CHECK(decode_action(std::vector<double>{-120, -80, -95}) == 1);
  CHECK(decode_action(std::vector<double>{2.0, 2.0}) == 0);
  CHECK(decode_action(std::vector<float>{1.0f, 4.0f, 4.0f}) == 1);
  CHECK_THROWS_AS(decode_action(std::vector<double>{}), Error);
}

TEST_CASE("decode action is invariant to shifts and positive scaling") {
  Rng rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> v(3);
    for (auto& x : v) x = std::round(rng.uniform(-50, 50));
    const int a = decode_action(v);
    auto shifted = v;
    for (auto& x : shifted) x += 17.0;
    auto scaled = v;
    for (auto& x : scaled) x *= 4.0;
    CHECK(decode_action(shifted) == a);
    CHECK(decode_action(scaled) == a);
  }
}
