#include <doctest.h>

#include <cstdio>

#include "smpc/kernels.hpp"
#include "smpc/predictor.hpp"
#include "smpc/sharing.hpp"

using namespace smpc;

namespace {

const FixedPointCodec kCodec(64, 16);
const RingSpec kSpec = kCodec.ring;

Duo::Options opts(uint64_t seed = 1) {
  Duo::Options o;
  o.seed = seed;
  o.codec = kCodec;
  return o;
}

PredictorWeights tiny(size_t h = 4, size_t r = 2, size_t o = 3) {
  PredictorWeights w;
  w.h = h;
  w.r = r;
  w.o = o;
  w.delta = 0.0;
  w.w1.assign(r * h, 0.0);
  w.b1.assign(r, 0.0);
  w.w2.assign(o * r, 0.0);
  w.b2.assign(o, 0.0);
  return w;
}

PredictorWeights random_weights(size_t h, size_t r, size_t o, uint64_t seed) {
  Rng rng(seed);
  PredictorWeights w = tiny(h, r, o);
  auto fill = [&](std::vector<double>& v, double scale) {
    for (auto& x : v) x = (rng.next_unit() - 0.5) * scale;
  };
  fill(w.w1, 1.0);
  fill(w.b1, 0.5);
  fill(w.w2, 1.0);
  fill(w.b2, 0.5);
  return w;
}

}  // namespace

TEST_CASE("predict_plain: zero weights and strict threshold") {
  PredictorWeights w = tiny();
  std::vector<double> x(w.h, 1.0);
  SparsityMask m = predict_plain(w, x, 1, kCodec);
  CHECK(m.nnz() == 0);  // 0 > 0 is false
}

TEST_CASE("predict_plain: bias signs drive the bits") {
  PredictorWeights w = tiny(4, 1, 2);
  w.b2 = {1.0, -1.0};
  std::vector<double> x(w.h, 0.3);
  SparsityMask m = predict_plain(w, x, 1, kCodec);
  CHECK(m.bits == std::vector<uint8_t>{1, 0});
}

TEST_CASE("raising delta never adds bits (monotone threshold)") {
  PredictorWeights w = random_weights(8, 3, 16, 5);
  Rng rng(6);
  std::vector<double> x(8 * 4);
  for (auto& v : x) v = (rng.next_unit() - 0.5) * 2.0;
  size_t prev = SIZE_MAX;
  for (double delta : {-0.5, 0.0, 0.1, 0.5, 1.0}) {
    w.delta = delta;
    SparsityMask m = predict_plain(w, x, 4, kCodec);
    CHECK(m.nnz() <= prev);
    prev = m.nnz();
  }
}

TEST_CASE("predict_mpc reconstructs bit-exactly to predict_plain") {
  Duo duo(opts(7));
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    PredictorWeights w = random_weights(6, 2, 5, 100 + trial);
    w.delta = (trial % 3 == 0) ? 0.0 : (rng.next_unit() - 0.5);
    const size_t m = 1 + rng.next_below(3);
    std::vector<double> x(m * w.h);
    for (auto& v : x) v = (rng.next_unit() - 0.5) * 2.0;
    SparsityMask expect = predict_plain(w, x, m, kCodec);

    Rng srng(200 + trial);
    auto [wp1, wp2] = share_predictor(w, kCodec, srng);
    RingMatrix xin(m, w.h);
    for (size_t i = 0; i < x.size(); ++i) xin.v[i] = kCodec.encode(x[i]);
    auto [x1, x2] = share(xin, kSpec, srng);
    RingMatrix outs[2];
    duo.run([&](ProtocolSession& s) {
      s.phase = "Predictor";
      outs[s.party - 1] = predict_mpc(s, (s.party == 1) ? x1.m : x2.m,
                                      (s.party == 1) ? wp1 : wp2, w.delta);
    });
    RingMatrix bits = kernels::add(outs[0], outs[1], kSpec);
    REQUIRE(bits.size() == expect.bits.size());
    for (size_t i = 0; i < bits.size(); ++i)
      CHECK(bits.v[i] == static_cast<Ring>(expect.bits[i]));
  }
}

TEST_CASE("predict_mpc with zero input exposes positive b2 entries") {
  Duo duo(opts(9));
  PredictorWeights w = tiny(4, 2, 3);
  w.b2 = {0.5, -0.5, 0.25};
  Rng rng(10);
  auto [wp1, wp2] = share_predictor(w, kCodec, rng);
  RingMatrix zero(1, 4);
  auto [x1, x2] = share(zero, kSpec, rng);
  RingMatrix outs[2];
  duo.run([&](ProtocolSession& s) {
    outs[s.party - 1] =
        predict_mpc(s, (s.party == 1) ? x1.m : x2.m, (s.party == 1) ? wp1 : wp2, 0.0);
  });
  RingMatrix bits = kernels::add(outs[0], outs[1], kSpec);
  CHECK(bits.v == std::vector<Ring>{1, 0, 1});
}

TEST_CASE("oracle_sparsity_ffn examples") {
  // All pre-activations negative -> all-zero mask.
  RingMatrix x(1, 2);
  x.v = {kCodec.encode(1.0), kCodec.encode(1.0)};
  RingMatrix w(2, 3);
  for (auto& v : w.v) v = kCodec.encode(-0.5);
  CHECK(oracle_sparsity_ffn(x, w, kCodec).nnz() == 0);

  // Identity-ish FFN on e1: exactly the positive first-row weights fire.
  RingMatrix e1(1, 3);
  e1.v = {kCodec.encode(1.0), 0, 0};
  RingMatrix w2(3, 4);
  w2.at(0, 0) = kCodec.encode(0.5);
  w2.at(0, 1) = kCodec.encode(-0.5);
  w2.at(0, 2) = kCodec.encode(2.0);
  w2.at(0, 3) = 0;
  SparsityMask m = oracle_sparsity_ffn(e1, w2, kCodec);
  CHECK(m.bits == std::vector<uint8_t>{1, 0, 1, 0});
}

TEST_CASE("oracle_sparsity_headnorm") {
  RingMatrix out(2, 4);  // 2 heads x head_dim 2, 2 rows
  out.at(0, 2) = kCodec.encode(0.25);
  std::vector<uint8_t> bits = oracle_sparsity_headnorm(out, 2, 2, 0.0, kCodec);
  CHECK(bits == std::vector<uint8_t>{0, 1});  // head 0 exactly zero
  bits = oracle_sparsity_headnorm(out, 2, 2, 0.5, kCodec);
  CHECK(bits == std::vector<uint8_t>{0, 0});
  bits = oracle_sparsity_headnorm(out, 2, 2, 0.2, kCodec);
  CHECK(bits == std::vector<uint8_t>{0, 1});
}

TEST_CASE("precision and recall") {
  std::vector<uint8_t> truth = {1, 1, 0, 0};
  CHECK(precision_recall(truth, truth) == std::pair<double, double>{1.0, 1.0});
  std::vector<uint8_t> all = {1, 1, 1, 1};
  auto pr = precision_recall(all, truth);
  CHECK(pr.first == doctest::Approx(0.5));
  CHECK(pr.second == doctest::Approx(1.0));
  std::vector<uint8_t> half = {1, 0, 1, 0};
  pr = precision_recall(half, truth);
  CHECK(pr.first == doctest::Approx(0.5));
  CHECK(pr.second == doctest::Approx(0.5));
  // Vacuous conventions.
  std::vector<uint8_t> none = {0, 0, 0, 0};
  pr = precision_recall(none, none);
  CHECK(pr.first == 1.0);
  CHECK(pr.second == 1.0);
  CHECK_THROWS_AS(precision_recall(none, std::vector<uint8_t>{0}), ContractError);
}

TEST_CASE("weights file roundtrip and validation") {
  PredictorWeights w = random_weights(6, 2, 4, 77);
  w.delta = 0.125;
  const std::string path = "/tmp/smpc_predictor_test.txt";
  save_predictor(path, w, 16);
  PredictorWeights back = load_predictor(path, 16);
  CHECK(back.h == w.h);
  CHECK(back.delta == doctest::Approx(w.delta));
  CHECK(back.w1 == w.w1);
  CHECK(back.b2 == w.b2);
  CHECK_THROWS_AS(load_predictor(path, 8), ConfigError);  // wrong f
  std::remove(path.c_str());

  PredictorWeights bad = w;
  bad.r = bad.h;  // violates the low-rank contract
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  PredictorWeights bad2 = w;
  bad2.w1.pop_back();
  CHECK_THROWS_AS(bad2.validate(), ConfigError);
}

TEST_CASE("synthesized FFN predictor hits the target recall") {
  const size_t h = 32, o = 64, rank = 8, samples = 24;
  Rng rng(123);
  std::vector<double> w_fc(h * o);
  for (auto& v : w_fc) v = (rng.next_unit() - 0.5) / std::sqrt(double(h));
  std::vector<double> sample_x(samples * h);
  for (auto& v : sample_x) v = (rng.next_unit() - 0.5) * 2.0;

  PredictorWeights pred =
      synthesize_ffn_predictor(w_fc, h, o, rank, sample_x, samples, 0.95, kCodec, 9);
  RingMatrix x_enc(samples, h);
  for (size_t i = 0; i < sample_x.size(); ++i) x_enc.v[i] = kCodec.encode(sample_x[i]);
  RingMatrix w_enc(h, o);
  for (size_t i = 0; i < w_fc.size(); ++i) w_enc.v[i] = kCodec.encode(w_fc[i]);
  SparsityMask truth = oracle_sparsity_ffn(x_enc, w_enc, kCodec);
  SparsityMask got = predict_plain(pred, sample_x, samples, kCodec);
  auto pr = precision_recall(got, truth);
  CHECK(pr.second >= 0.95);

  PredictorWeights rate =
      synthesize_rate_predictor(h, 8, 4, sample_x, samples, 0.5, kCodec, 10);
  SparsityMask bits = predict_plain(rate, sample_x, samples, kCodec);
  const double r = double(bits.nnz()) / double(bits.bits.size());
  CHECK(r > 0.3);
  CHECK(r < 0.7);
}
