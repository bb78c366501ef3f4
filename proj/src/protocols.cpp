#include "smpc/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "smpc/kernels.hpp"

namespace smpc {

IdealCostModel IdealCostModel::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open cost-model file: " + path);
  IdealCostModel m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key, eq;
    uint64_t value;
    if (!(ls >> key)) continue;
    if (!(ls >> eq >> value) || eq != "=")
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    if (key == "compare") m.compare_per_element = value;
    else if (key == "relu") m.relu_per_element = value;
    else if (key == "softmax_row") m.softmax_per_row = value;
    else if (key == "layernorm") m.layernorm_per_element = value;
    else throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown cost kind '" + key + "'");
  }
  return m;
}

void IdealCostModel::to_file(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write cost-model file: " + path);
  os << "compare = " << compare_per_element << "\n"
     << "relu = " << relu_per_element << "\n"
     << "softmax_row = " << softmax_per_row << "\n"
     << "layernorm = " << layernorm_per_element << "\n";
}

void FreshnessRegistry::consume(int party, uint64_t id) {
  if (party != 1 && party != 2) throw ContractError("party id must be 1 or 2");
  std::lock_guard<std::mutex> lk(mu_);
  if (!used_[party - 1].insert(id).second)
    throw FreshnessError("dealer artifact " + std::to_string(id) + " consumed twice");
}

bool FreshnessRegistry::seen(int party, uint64_t id) const {
  std::lock_guard<std::mutex> lk(mu_);
  return used_[party - 1].count(id) > 0;
}

void FreshnessRegistry::clear() {
  std::lock_guard<std::mutex> lk(mu_);
  used_[0].clear();
  used_[1].clear();
}

RingMatrix pi_linear(ProtocolSession& s, Ring a, const RingMatrix& x, Ring b, const RingMatrix& y,
                     Ring c) {
  if (!x.same_shape(y)) throw ContractError("pi_linear: shape mismatch");
  const RingSpec& spec = s.ring();
  RingMatrix z(x.rows, x.cols);
  const Ring cpart = (s.party == 2) ? c : 0;
  for (size_t i = 0; i < z.size(); ++i)
    z.v[i] = spec.add(spec.add(spec.mul(a, x.v[i]), spec.mul(b, y.v[i])), cpart);
  return z;
}

RingMatrix pi_matmul_with(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y,
                          const BeaverHalf& triple) {
  if (x.cols != y.rows) throw ContractError("pi_matmul: inner dimensions mismatch");
  if (triple.a.rows != x.rows || triple.a.cols != x.cols || triple.b.rows != y.rows ||
      triple.b.cols != y.cols)
    throw ContractError("pi_matmul: triple shape mismatch");
  s.fresh->consume(s.party, triple.id);
  const RingSpec& spec = s.ring();

  // D = X - A, E = Y - B, exchanged in one round.
  RingMatrix d_share = kernels::sub(x, triple.a, spec);
  RingMatrix e_share = kernels::sub(y, triple.b, spec);
  std::vector<Ring> payload;
  payload.reserve(d_share.size() + e_share.size());
  payload.insert(payload.end(), d_share.v.begin(), d_share.v.end());
  payload.insert(payload.end(), e_share.v.begin(), e_share.v.end());
  std::vector<Ring> peer = s.net->exchange(s.party, s.phase, payload);
  if (peer.size() != payload.size()) throw DesyncError("pi_matmul: peer payload size mismatch");

  RingMatrix d(x.rows, x.cols), e(y.rows, y.cols);
  for (size_t i = 0; i < d.size(); ++i) d.v[i] = spec.add(d_share.v[i], peer[i]);
  for (size_t i = 0; i < e.size(); ++i) e.v[i] = spec.add(e_share.v[i], peer[d.size() + i]);

  // Z_i = C_i + D*B_i + A_i*E + (i-1)*D*E
  RingMatrix z = kernels::add(triple.c, kernels::matmul(d, triple.b, spec), spec);
  z = kernels::add(z, kernels::matmul(triple.a, e, spec), spec);
  if (s.party == 2) z = kernels::add(z, kernels::matmul(d, e, spec), spec);

  s.stats.matmul_calls += 1;
  s.stats.dot_products += x.rows * y.cols;
  s.stats.scalar_mults += x.rows * x.cols * y.cols;
  return z;
}

RingMatrix pi_matmul(ProtocolSession& s, const RingMatrix& x, const RingMatrix& y) {
  if (x.cols != y.rows) throw ContractError("pi_matmul: inner dimensions mismatch");
  BeaverHalf triple = s.dealer->take_beaver(s.party, x.rows, x.cols, y.cols, s.phase);
  return pi_matmul_with(s, x, y, triple);
}

std::vector<Ring> pi_mul_elementwise(ProtocolSession& s, std::span<const Ring> x,
                                     std::span<const Ring> y) {
  if (x.size() != y.size()) throw ContractError("pi_mul_elementwise: length mismatch");
  const RingSpec& spec = s.ring();
  ElemTripleHalf t = s.dealer->take_elem_triple(s.party, x.size(), s.phase);
  s.fresh->consume(s.party, t.id);
  const size_t n = x.size();
  std::vector<Ring> payload(2 * n);
  for (size_t i = 0; i < n; ++i) {
    payload[i] = spec.sub(x[i], t.a[i]);
    payload[n + i] = spec.sub(y[i], t.b[i]);
  }
  std::vector<Ring> peer = s.net->exchange(s.party, s.phase, payload);
  if (peer.size() != payload.size()) throw DesyncError("pi_mul_elementwise: peer size mismatch");
  std::vector<Ring> z(n);
  for (size_t i = 0; i < n; ++i) {
    const Ring d = spec.add(payload[i], peer[i]);
    const Ring e = spec.add(payload[n + i], peer[n + i]);
    Ring zi = spec.add(t.c[i], spec.add(spec.mul(d, t.b[i]), spec.mul(e, t.a[i])));
    if (s.party == 2) zi = spec.add(zi, spec.mul(d, e));
    z[i] = zi;
  }
  return z;
}

RingMatrix truncate(ProtocolSession& s, const RingMatrix& z, int f) {
  if (f == 0) return z;
  const RingSpec& spec = s.ring();
  if (s.local_truncation) {
    // Local share truncation: party 1 shifts, party 2 shifts the negation.
    // <= 1 ulp error (plus the rare large-share wrap).
    RingMatrix out(z.rows, z.cols);
    for (size_t i = 0; i < z.size(); ++i) {
      if (s.party == 1)
        out.v[i] = spec.arith_shift(z.v[i], f);
      else
        out.v[i] = spec.neg(spec.arith_shift(spec.neg(z.v[i]), f));
    }
    return out;
  }

  TruncBatchHalf pair = s.dealer->take_trunc_batch(s.party, z.size(), f, s.phase);
  s.fresh->consume(s.party, pair.id);
  // Wire message is the uniformly masked share z_i + r_i; the functionality
  // removes r exactly and reshares with the batch's output mask.
  std::vector<Ring> payload(z.size());
  for (size_t i = 0; i < z.size(); ++i) payload[i] = spec.add(z.v[i], pair.r[i]);

  Dealer* dealer = s.dealer;
  const uint64_t id = pair.id;
  TransportSim::IdealFn fn = [dealer, id, spec, f](std::span<const Ring> p1,
                                                   std::span<const Ring> p2, Rng&) {
    auto [r_plain, u_plain] = dealer->trunc_plain(id);
    std::vector<Ring> out1(p1.size()), out2(p1.size());
    for (size_t i = 0; i < p1.size(); ++i) {
      const Ring e = spec.add(p1[i], p2[i]);
      const Ring zv = spec.sub(e, (*r_plain)[i]);
      const Ring shifted = spec.arith_shift(zv, f);
      out1[i] = (*u_plain)[i];
      out2[i] = spec.sub(shifted, (*u_plain)[i]);
    }
    return std::make_pair(std::move(out1), std::move(out2));
  };
  std::vector<Ring> res = s.net->ideal_exchange(s.party, s.phase, payload, id, fn, z.size());
  RingMatrix out(z.rows, z.cols);
  out.v = std::move(res);
  return out;
}

namespace {

RingMatrix shuffle_core(ProtocolSession& s, const RingMatrix& x, const std::vector<size_t>& tau,
                        const std::vector<size_t>& rho, const ShuffleMaskHalf& masks) {
  const RingSpec& spec = s.ring();
  if (x.cols != tau.size()) throw ContractError("shuffle: correlation length mismatch");
  if (masks.a.rows != x.rows || masks.a.cols != x.cols)
    throw ContractError("shuffle: mask shape mismatch");
  s.fresh->consume(s.party, masks.id);
  RingMatrix y = kernels::add(kernels::apply_perm_rows(tau, x), masks.a, spec);
  std::vector<Ring> peer = s.net->exchange(s.party, s.phase, y.v);
  if (peer.size() != y.size()) throw DesyncError("shuffle: peer payload size mismatch");
  RingMatrix ypeer(x.rows, x.cols);
  ypeer.v = std::move(peer);
  return kernels::sub(kernels::apply_perm_rows(rho, ypeer), masks.b, spec);
}

}  // namespace

RingMatrix pi_shuffle_with_masks(ProtocolSession& s, const RingMatrix& x,
                                 const ShuffleCorrHalf& corr, const ShuffleMaskHalf& masks) {
  if (masks.corr_id != corr.id || masks.inverse)
    throw ContractError("pi_shuffle: mask set does not match correlation");
  return shuffle_core(s, x, corr.tau, corr.rho, masks);
}

RingMatrix pi_shuffle(ProtocolSession& s, const RingMatrix& x, const ShuffleCorrHalf& corr) {
  ShuffleMaskHalf masks = s.dealer->take_shuffle_masks(s.party, corr, false, x.rows, s.phase);
  return pi_shuffle_with_masks(s, x, corr, masks);
}

std::vector<Ring> pi_shuffle(ProtocolSession& s, std::span<const Ring> x,
                             const ShuffleCorrHalf& corr) {
  RingMatrix m(1, x.size());
  m.v.assign(x.begin(), x.end());
  return pi_shuffle(s, m, corr).v;
}

RingMatrix pi_unshuffle(ProtocolSession& s, const RingMatrix& z, const ShuffleCorrHalf& corr) {
  // Unshuffle runs the same protocol with locally inverted sub-permutations
  // (tau' = rho^-1, rho' = tau^-1) and fresh inverse-oriented masks.
  ShuffleMaskHalf masks = s.dealer->take_shuffle_masks(s.party, corr, true, z.rows, s.phase);
  std::vector<size_t> tau_inv = kernels::invert_perm(corr.rho);
  std::vector<size_t> rho_inv = kernels::invert_perm(corr.tau);
  return shuffle_core(s, z, tau_inv, rho_inv, masks);
}

std::vector<Ring> pi_unshuffle(ProtocolSession& s, std::span<const Ring> z,
                               const ShuffleCorrHalf& corr) {
  RingMatrix m(1, z.size());
  m.v.assign(z.begin(), z.end());
  return pi_unshuffle(s, m, corr).v;
}

std::vector<Ring> reveal(ProtocolSession& s, std::span<const Ring> x) {
  std::vector<Ring> peer = s.net->exchange(s.party, s.phase, x);
  if (peer.size() != x.size()) throw DesyncError("reveal: peer payload size mismatch");
  const RingSpec& spec = s.ring();
  std::vector<Ring> out(x.size());
  for (size_t i = 0; i < x.size(); ++i) out[i] = spec.add(x[i], peer[i]);
  return out;
}

RingMatrix reveal_matrix(ProtocolSession& s, const RingMatrix& x) {
  RingMatrix out(x.rows, x.cols);
  out.v = reveal(s, x.v);
  return out;
}

uint64_t ideal_charge(const IdealCostModel& costs, NonlinKind kind, size_t rows, size_t elems) {
  switch (kind) {
    case NonlinKind::compare_gt: return costs.compare_per_element * elems;
    case NonlinKind::relu: return costs.relu_per_element * elems;
    case NonlinKind::softmax_rows: return costs.softmax_per_row * rows;
    case NonlinKind::layernorm_rows: return costs.layernorm_per_element * elems;
  }
  throw ContractError("ideal_nonlinear: unknown kind");
}

RingMatrix ideal_nonlinear(ProtocolSession& s, const RingMatrix& v, NonlinKind kind,
                           const NonlinParams& params) {
  const FixedPointCodec codec = s.codec;
  const RingSpec spec = codec.ring;
  const size_t rows = v.rows, cols = v.cols;
  if (kind == NonlinKind::softmax_rows && !params.row_lengths.empty() &&
      params.row_lengths.size() != rows)
    throw ContractError("ideal_nonlinear: row_lengths size mismatch");
  const uint64_t charge = ideal_charge(s.costs, kind, rows, v.size());
  const Ring delta_enc = codec.encode(params.delta);
  const NonlinParams p = params;

  TransportSim::IdealFn fn = [codec, spec, kind, p, rows, cols, delta_enc](
                                 std::span<const Ring> p1, std::span<const Ring> p2, Rng& rng) {
    const size_t n = p1.size();
    std::vector<Ring> plain(n), out(n);
    for (size_t i = 0; i < n; ++i) plain[i] = spec.add(p1[i], p2[i]);
    switch (kind) {
      case NonlinKind::compare_gt:
        // Strict threshold: 1 iff value > delta, as a raw ring bit.
        for (size_t i = 0; i < n; ++i)
          out[i] = (spec.to_signed(plain[i]) > spec.to_signed(delta_enc)) ? 1 : 0;
        break;
      case NonlinKind::relu:
        for (size_t i = 0; i < n; ++i)
          out[i] = (spec.to_signed(plain[i]) > 0) ? plain[i] : 0;
        break;
      case NonlinKind::softmax_rows:
        for (size_t r = 0; r < rows; ++r) {
          size_t len = cols;
          if (!p.row_lengths.empty() && p.row_lengths[r] > 0)
            len = std::min(p.row_lengths[r], cols);
          double maxv = -1e300;
          for (size_t j = 0; j < len; ++j)
            maxv = std::max(maxv, codec.decode(plain[r * cols + j]) * p.prescale);
          double sum = 0;
          std::vector<double> ex(len);
          for (size_t j = 0; j < len; ++j) {
            ex[j] = std::exp(codec.decode(plain[r * cols + j]) * p.prescale - maxv);
            sum += ex[j];
          }
          for (size_t j = 0; j < cols; ++j)
            out[r * cols + j] = (j < len) ? codec.encode(ex[j] / sum) : 0;
        }
        break;
      case NonlinKind::layernorm_rows:
        for (size_t r = 0; r < rows; ++r) {
          double mean = 0;
          for (size_t j = 0; j < cols; ++j) mean += codec.decode(plain[r * cols + j]);
          mean /= static_cast<double>(cols);
          double var = 0;
          for (size_t j = 0; j < cols; ++j) {
            const double d = codec.decode(plain[r * cols + j]) - mean;
            var += d * d;
          }
          var /= static_cast<double>(cols);
          const double inv = 1.0 / std::sqrt(var + 1e-5);
          for (size_t j = 0; j < cols; ++j)
            out[r * cols + j] = codec.encode((codec.decode(plain[r * cols + j]) - mean) * inv);
        }
        break;
    }
    // Fresh uniform resharing.
    std::vector<Ring> out1(n), out2(n);
    for (size_t i = 0; i < n; ++i) {
      out1[i] = spec.random(rng);
      out2[i] = spec.sub(out[i], out1[i]);
    }
    return std::make_pair(std::move(out1), std::move(out2));
  };

  std::vector<Ring> res = s.net->ideal_exchange(s.party, s.phase, v.v,
                                                static_cast<uint64_t>(kind), fn, charge);
  RingMatrix out(rows, cols);
  out.v = std::move(res);
  return out;
}

}  // namespace smpc
