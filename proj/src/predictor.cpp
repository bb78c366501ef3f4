#include "smpc/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "smpc/kernels.hpp"
#include "smpc/sharing.hpp"

namespace smpc {

void PredictorWeights::validate() const {
  if (h == 0 || r == 0 || o == 0) throw ConfigError("predictor dims must be nonzero");
  if (r >= std::min(h, o)) throw ConfigError("predictor rank must satisfy r < min(h, o)");
  if (w1.size() != r * h || b1.size() != r || w2.size() != o * r || b2.size() != o)
    throw ConfigError("predictor weight sizes inconsistent with header");
  auto finite = [](const std::vector<double>& v) {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  };
  if (!finite(w1) || !finite(b1) || !finite(w2) || !finite(b2) || !std::isfinite(delta))
    throw ConfigError("predictor weights must be finite");
}

namespace {

RingMatrix encode_matrix(const std::vector<double>& v, size_t rows, size_t cols,
                         const FixedPointCodec& codec) {
  RingMatrix m(rows, cols);
  for (size_t i = 0; i < v.size(); ++i) m.v[i] = codec.encode(v[i]);
  return m;
}

// Encoded, transposed layout used by both the plain and MPC paths.
struct EncodedPredictor {
  RingMatrix w1t, b1, w2t, b2;
};

EncodedPredictor encode_predictor(const PredictorWeights& w, const FixedPointCodec& codec) {
  EncodedPredictor e;
  e.w1t = RingMatrix(w.h, w.r);
  for (size_t i = 0; i < w.r; ++i)
    for (size_t j = 0; j < w.h; ++j) e.w1t.at(j, i) = codec.encode(w.w1[i * w.h + j]);
  e.b1 = encode_matrix(w.b1, 1, w.r, codec);
  e.w2t = RingMatrix(w.r, w.o);
  for (size_t i = 0; i < w.o; ++i)
    for (size_t j = 0; j < w.r; ++j) e.w2t.at(j, i) = codec.encode(w.w2[i * w.r + j]);
  e.b2 = encode_matrix(w.b2, 1, w.o, codec);
  return e;
}

RingMatrix add_row_broadcast(const RingMatrix& m, const RingMatrix& row, const RingSpec& spec) {
  RingMatrix out(m.rows, m.cols);
  for (size_t i = 0; i < m.rows; ++i)
    for (size_t j = 0; j < m.cols; ++j) out.at(i, j) = spec.add(m.at(i, j), row.at(0, j));
  return out;
}

}  // namespace

std::pair<SharedPredictorHalf, SharedPredictorHalf> share_predictor(const PredictorWeights& w,
                                                                    const FixedPointCodec& codec,
                                                                    Rng& rng) {
  w.validate();
  EncodedPredictor e = encode_predictor(w, codec);
  SharedPredictorHalf h1, h2;
  auto split = [&](const RingMatrix& m, RingMatrix& a, RingMatrix& b) {
    auto [s1, s2] = share(m, codec.ring, rng);
    a = std::move(s1.m);
    b = std::move(s2.m);
  };
  split(e.w1t, h1.w1t, h2.w1t);
  split(e.b1, h1.b1, h2.b1);
  split(e.w2t, h1.w2t, h2.w2t);
  split(e.b2, h1.b2, h2.b2);
  return {std::move(h1), std::move(h2)};
}

SparsityMask predict_plain(const PredictorWeights& w, const std::vector<double>& x, size_t m,
                           const FixedPointCodec& codec) {
  w.validate();
  if (x.size() != m * w.h) throw ContractError("predict_plain: input size mismatch");
  const RingSpec& spec = codec.ring;
  EncodedPredictor e = encode_predictor(w, codec);
  RingMatrix xin = encode_matrix(x, m, w.h, codec);
  RingMatrix z1 = kernels::arith_shift(kernels::matmul(xin, e.w1t, spec), codec.f, spec);
  z1 = add_row_broadcast(z1, e.b1, spec);
  RingMatrix z2 = kernels::arith_shift(kernels::matmul(z1, e.w2t, spec), codec.f, spec);
  z2 = add_row_broadcast(z2, e.b2, spec);
  const Ring delta_enc = codec.encode(w.delta);
  SparsityMask mask(m, w.o);
  for (size_t i = 0; i < z2.size(); ++i)
    mask.bits[i] = spec.to_signed(z2.v[i]) > spec.to_signed(delta_enc) ? 1 : 0;
  return mask;
}

RingMatrix predict_mpc(ProtocolSession& s, const RingMatrix& x_share,
                       const SharedPredictorHalf& w, double delta) {
  if (x_share.cols != w.w1t.rows) throw ContractError("predict_mpc: input width mismatch");
  const RingSpec& spec = s.ring();
  RingMatrix z1 = truncate(s, pi_matmul(s, x_share, w.w1t), s.codec.f);
  z1 = add_row_broadcast(z1, w.b1, spec);
  RingMatrix z2 = truncate(s, pi_matmul(s, z1, w.w2t), s.codec.f);
  z2 = add_row_broadcast(z2, w.b2, spec);
  NonlinParams p;
  p.delta = delta;
  return ideal_nonlinear(s, z2, NonlinKind::compare_gt, p);
}

SparsityMask oracle_sparsity_ffn(const RingMatrix& x_enc, const RingMatrix& w_enc,
                                 const FixedPointCodec& codec) {
  const RingSpec& spec = codec.ring;
  RingMatrix pre = kernels::arith_shift(kernels::matmul(x_enc, w_enc, spec), codec.f, spec);
  SparsityMask mask(pre.rows, pre.cols);
  for (size_t i = 0; i < pre.size(); ++i) mask.bits[i] = spec.to_signed(pre.v[i]) > 0 ? 1 : 0;
  return mask;
}

std::vector<uint8_t> oracle_sparsity_headnorm(const RingMatrix& head_outputs, size_t heads,
                                              size_t head_dim, double delta,
                                              const FixedPointCodec& codec) {
  if (head_outputs.cols != heads * head_dim)
    throw ContractError("oracle_sparsity_headnorm: width mismatch");
  std::vector<uint8_t> bits(heads, 0);
  for (size_t hd = 0; hd < heads; ++hd) {
    if (delta == 0.0) {
      // Exact nonzero test on the ring values.
      for (size_t r = 0; r < head_outputs.rows && !bits[hd]; ++r)
        for (size_t j = 0; j < head_dim; ++j)
          if (head_outputs.at(r, hd * head_dim + j) != 0) {
            bits[hd] = 1;
            break;
          }
    } else {
      double norm2 = 0;
      for (size_t r = 0; r < head_outputs.rows; ++r)
        for (size_t j = 0; j < head_dim; ++j) {
          const double v = codec.decode(head_outputs.at(r, hd * head_dim + j));
          norm2 += v * v;
        }
      bits[hd] = std::sqrt(norm2) > delta ? 1 : 0;
    }
  }
  return bits;
}

std::pair<double, double> precision_recall(const std::vector<uint8_t>& pred,
                                           const std::vector<uint8_t>& truth) {
  if (pred.size() != truth.size()) throw ContractError("precision_recall: length mismatch");
  uint64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] && truth[i]) ++tp;
    else if (pred[i] && !truth[i]) ++fp;
    else if (!pred[i] && truth[i]) ++fn;
  }
  const double precision = (tp + fp == 0) ? 1.0 : static_cast<double>(tp) / (tp + fp);
  const double recall = (tp + fn == 0) ? 1.0 : static_cast<double>(tp) / (tp + fn);
  return {precision, recall};
}

std::pair<double, double> precision_recall(const SparsityMask& pred, const SparsityMask& truth) {
  if (pred.rows != truth.rows || pred.cols != truth.cols)
    throw ContractError("precision_recall: shape mismatch");
  return precision_recall(pred.bits, truth.bits);
}

void save_predictor(const std::string& path, const PredictorWeights& w, int f) {
  w.validate();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write predictor weights: " + path);
  os << w.h << " " << w.r << " " << w.o << " " << w.delta << " " << f << "\n";
  os.precision(17);
  auto dump = [&](const std::vector<double>& v) {
    for (size_t i = 0; i < v.size(); ++i) os << v[i] << (i + 1 == v.size() ? "\n" : " ");
  };
  dump(w.w1);
  dump(w.b1);
  dump(w.w2);
  dump(w.b2);
}

PredictorWeights load_predictor(const std::string& path, int expected_f) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open predictor weights: " + path);
  PredictorWeights w;
  int f = 0;
  if (!(is >> w.h >> w.r >> w.o >> w.delta >> f))
    throw ConfigError("predictor weights header malformed: " + path);
  if (f != expected_f)
    throw ConfigError("predictor weights were written for f=" + std::to_string(f));
  auto read_vec = [&](std::vector<double>& v, size_t n, const char* what) {
    v.resize(n);
    for (size_t i = 0; i < n; ++i)
      if (!(is >> v[i])) throw ConfigError(std::string("predictor weights truncated in ") + what);
  };
  read_vec(w.w1, w.r * w.h, "W1");
  read_vec(w.b1, w.r, "b1");
  read_vec(w.w2, w.o * w.r, "W2");
  read_vec(w.b2, w.o, "b2");
  w.validate();
  return w;
}

namespace {

double gaussian(Rng& rng) {
  // Box-Muller.
  double u1 = rng.next_unit();
  double u2 = rng.next_unit();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Modified Gram-Schmidt on the columns of a (h x r) column buffer.
void orthonormalize(std::vector<double>& u, size_t h, size_t r) {
  for (size_t c = 0; c < r; ++c) {
    for (size_t prev = 0; prev < c; ++prev) {
      double dot = 0;
      for (size_t i = 0; i < h; ++i) dot += u[i * r + c] * u[i * r + prev];
      for (size_t i = 0; i < h; ++i) u[i * r + c] -= dot * u[i * r + prev];
    }
    double norm = 0;
    for (size_t i = 0; i < h; ++i) norm += u[i * r + c] * u[i * r + c];
    norm = std::sqrt(std::max(norm, 1e-30));
    for (size_t i = 0; i < h; ++i) u[i * r + c] /= norm;
  }
}

double recall_with_bias(const PredictorWeights& w, const std::vector<double>& sample_x,
                        size_t samples, const std::vector<uint8_t>& truth,
                        const FixedPointCodec& codec, double bias) {
  PredictorWeights trial = w;
  for (double& b : trial.b2) b = bias;
  SparsityMask pred = predict_plain(trial, sample_x, samples, codec);
  return precision_recall(pred.bits, truth).second;
}

}  // namespace

PredictorWeights synthesize_ffn_predictor(const std::vector<double>& w_fc, size_t h, size_t o,
                                          size_t rank, const std::vector<double>& sample_x,
                                          size_t samples, double target_recall,
                                          const FixedPointCodec& codec, uint64_t seed) {
  if (w_fc.size() != h * o) throw ContractError("synthesize_ffn_predictor: weight size mismatch");
  Rng rng(seed, 0x5f4ecULL);

  // Randomized range finder with one power pass: U = orth(W (W^T (W G))).
  std::vector<double> g(o * rank);
  for (auto& v : g) v = gaussian(rng);
  std::vector<double> y(h * rank, 0.0);
  for (size_t i = 0; i < h; ++i)
    for (size_t k = 0; k < o; ++k) {
      const double wv = w_fc[i * o + k];
      if (wv == 0) continue;
      for (size_t c = 0; c < rank; ++c) y[i * rank + c] += wv * g[k * rank + c];
    }
  std::vector<double> t(o * rank, 0.0);
  for (size_t k = 0; k < o; ++k)
    for (size_t i = 0; i < h; ++i) {
      const double wv = w_fc[i * o + k];
      if (wv == 0) continue;
      for (size_t c = 0; c < rank; ++c) t[k * rank + c] += wv * y[i * rank + c];
    }
  std::fill(y.begin(), y.end(), 0.0);
  for (size_t i = 0; i < h; ++i)
    for (size_t k = 0; k < o; ++k) {
      const double wv = w_fc[i * o + k];
      if (wv == 0) continue;
      for (size_t c = 0; c < rank; ++c) y[i * rank + c] += wv * t[k * rank + c];
    }
  orthonormalize(y, h, rank);

  PredictorWeights w;
  w.h = h;
  w.r = rank;
  w.o = o;
  w.delta = 0.0;
  w.w1.assign(rank * h, 0.0);
  for (size_t c = 0; c < rank; ++c)
    for (size_t i = 0; i < h; ++i) w.w1[c * h + i] = y[i * rank + c];  // W1 = U^T
  w.b1.assign(rank, 0.0);
  w.w2.assign(o * rank, 0.0);
  for (size_t k = 0; k < o; ++k)
    for (size_t c = 0; c < rank; ++c) {
      double acc = 0;
      for (size_t i = 0; i < h; ++i) acc += y[i * rank + c] * w_fc[i * o + k];
      w.w2[k * rank + c] = acc;  // W2 = (U^T W)^T rows
    }
  w.b2.assign(o, 0.0);

  // Bias margin calibration: recall is monotone in the shared bias.
  RingMatrix x_enc(samples, h);
  for (size_t i = 0; i < samples * h; ++i) x_enc.v[i] = codec.encode(sample_x[i]);
  RingMatrix w_enc(h, o);
  for (size_t i = 0; i < h * o; ++i) w_enc.v[i] = codec.encode(w_fc[i]);
  SparsityMask truth = oracle_sparsity_ffn(x_enc, w_enc, codec);

  double lo = 0.0, hi = 4.0;
  if (recall_with_bias(w, sample_x, samples, truth.bits, codec, lo) < target_recall) {
    for (int it = 0; it < 40 && hi - lo > 1e-4; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (recall_with_bias(w, sample_x, samples, truth.bits, codec, mid) >= target_recall)
        hi = mid;
      else
        lo = mid;
    }
    for (double& b : w.b2) b = hi;
  }
  return w;
}

PredictorWeights synthesize_rate_predictor(size_t h, size_t o, size_t rank,
                                           const std::vector<double>& sample_x, size_t samples,
                                           double target_rate, const FixedPointCodec& codec,
                                           uint64_t seed) {
  Rng rng(seed, 0x7a7eULL);
  PredictorWeights w;
  w.h = h;
  w.r = rank;
  w.o = o;
  w.delta = 0.0;
  w.w1.resize(rank * h);
  for (auto& v : w.w1) v = gaussian(rng) / std::sqrt(static_cast<double>(h));
  w.b1.assign(rank, 0.0);
  w.w2.resize(o * rank);
  for (auto& v : w.w2) v = gaussian(rng) / std::sqrt(static_cast<double>(rank));
  w.b2.assign(o, 0.0);

  // Activation rate is monotone in the shared bias; bisect it.
  auto rate_at = [&](double bias) {
    PredictorWeights trial = w;
    for (double& b : trial.b2) b = bias;
    SparsityMask pred = predict_plain(trial, sample_x, samples, codec);
    return static_cast<double>(pred.nnz()) / static_cast<double>(pred.bits.size());
  };
  double lo = -8.0, hi = 8.0;
  for (int it = 0; it < 50; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (rate_at(mid) < target_rate)
      lo = mid;
    else
      hi = mid;
  }
  for (double& b : w.b2) b = hi;
  return w;
}

}  // namespace smpc
