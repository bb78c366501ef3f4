#include "smpc/dealer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "smpc/error.hpp"
#include "smpc/kernels.hpp"
#include "smpc/transport.hpp"

namespace smpc {

namespace {

constexpr uint64_t kIndexMask = (1ULL << 56) - 1;

std::vector<size_t> random_perm(size_t n, Rng& rng) {
  std::vector<size_t> p(n);
  for (size_t i = 0; i < n; ++i) p[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.next_below(i)]);
  return p;
}

std::pair<RingMatrix, RingMatrix> split(const RingMatrix& m, const RingSpec& spec, Rng& rng) {
  RingMatrix h1(m.rows, m.cols), h2(m.rows, m.cols);
  for (size_t i = 0; i < m.size(); ++i) {
    h1.v[i] = spec.random(rng);
    h2.v[i] = spec.sub(m.v[i], h1.v[i]);
  }
  return {std::move(h1), std::move(h2)};
}

std::pair<std::vector<Ring>, std::vector<Ring>> split_vec(const std::vector<Ring>& v,
                                                          const RingSpec& spec, Rng& rng) {
  std::vector<Ring> h1(v.size()), h2(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    h1[i] = spec.random(rng);
    h2[i] = spec.sub(v[i], h1[i]);
  }
  return {std::move(h1), std::move(h2)};
}

}  // namespace

size_t dp_flip_count(double eps, double gain, size_t n, Rng& rng) {
  const double q = std::exp(-eps);
  const double p0 = (1.0 - q) / (1.0 + q);
  const double u = rng.next_unit();
  uint64_t magnitude = 0;
  if (u >= p0) {
    const double v = (u - p0) / (1.0 - p0);
    magnitude = 1 + static_cast<uint64_t>(std::floor(std::log(1.0 - v) / std::log(q)));
  }
  const double scaled = gain * static_cast<double>(magnitude);
  if (scaled >= static_cast<double>(n)) return n;
  return static_cast<size_t>(std::llround(scaled));
}

Dealer::Dealer(uint64_t seed, RingSpec spec) : seed_(seed), spec_(spec) {}

void Dealer::set_budget(MaterialKind kind, uint64_t count) {
  std::lock_guard<std::mutex> lk(mu_);
  budgets_[static_cast<uint32_t>(kind)] = count;
}

void Dealer::check_budget(MaterialKind kind, uint64_t index) const {
  auto it = budgets_.find(static_cast<uint32_t>(kind));
  if (it != budgets_.end() && index >= it->second)
    throw DealerExhaustedError("dealer budget exhausted for kind " +
                               std::to_string(static_cast<uint32_t>(kind)));
}

uint64_t Dealer::next_index(int party, MaterialKind kind) {
  if (party != 1 && party != 2) throw ContractError("party id must be 1 or 2");
  return counters_[party - 1][static_cast<uint32_t>(kind)]++;
}

void Dealer::charge_offline(const std::string& phase, uint64_t elems_per_party) {
  if (ledger_) ledger_->add_offline(phase, elems_per_party);
}

const Dealer::BeaverArt& Dealer::beaver_at(uint64_t idx, size_t m, size_t n, size_t p) {
  if (idx >= beavers_.size()) {
    check_budget(MaterialKind::beaver, idx);
    Rng rng = rng_for(MaterialKind::beaver, idx);
    RingMatrix a = RingMatrix::random(m, n, spec_, rng);
    RingMatrix b = RingMatrix::random(n, p, spec_, rng);
    RingMatrix c = kernels::matmul(a, b, spec_);
    BeaverArt art;
    art.m = m;
    art.n = n;
    art.p = p;
    std::tie(art.a1, art.a2) = split(a, spec_, rng);
    std::tie(art.b1, art.b2) = split(b, spec_, rng);
    std::tie(art.c1, art.c2) = split(c, spec_, rng);
    beavers_.push_back(std::move(art));
  }
  const BeaverArt& art = beavers_[idx];
  if (art.m != m || art.n != n || art.p != p)
    throw DesyncError("beaver triple request shape mismatch between parties");
  return art;
}

BeaverHalf Dealer::take_beaver(int party, size_t m, size_t n, size_t p, const std::string& phase) {
  if (m == 0 || n == 0 || p == 0) throw ContractError("beaver triple shapes must be nonzero");
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = next_index(party, MaterialKind::beaver);
  const bool fresh_mint = idx >= beavers_.size();
  const BeaverArt& art = beaver_at(idx, m, n, p);
  if (fresh_mint) charge_offline(phase, m * n + n * p + m * p);
  BeaverHalf h;
  h.id = make_id(MaterialKind::beaver, idx);
  h.a = (party == 1) ? art.a1 : art.a2;
  h.b = (party == 1) ? art.b1 : art.b2;
  h.c = (party == 1) ? art.c1 : art.c2;
  return h;
}

const Dealer::ElemTripleArt& Dealer::elem_at(uint64_t idx, size_t n) {
  if (idx >= elems_.size()) {
    check_budget(MaterialKind::elem_triple, idx);
    Rng rng = rng_for(MaterialKind::elem_triple, idx);
    std::vector<Ring> a(n), b(n), c(n);
    for (size_t i = 0; i < n; ++i) {
      a[i] = spec_.random(rng);
      b[i] = spec_.random(rng);
      c[i] = spec_.mul(a[i], b[i]);
    }
    ElemTripleArt art;
    art.n = n;
    std::tie(art.a1, art.a2) = split_vec(a, spec_, rng);
    std::tie(art.b1, art.b2) = split_vec(b, spec_, rng);
    std::tie(art.c1, art.c2) = split_vec(c, spec_, rng);
    elems_.push_back(std::move(art));
  }
  const ElemTripleArt& art = elems_[idx];
  if (art.n != n) throw DesyncError("elementwise triple request length mismatch between parties");
  return art;
}

ElemTripleHalf Dealer::take_elem_triple(int party, size_t n, const std::string& phase) {
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = next_index(party, MaterialKind::elem_triple);
  const bool fresh_mint = idx >= elems_.size();
  const ElemTripleArt& art = elem_at(idx, n);
  if (fresh_mint) charge_offline(phase, 3 * n);
  ElemTripleHalf h;
  h.id = make_id(MaterialKind::elem_triple, idx);
  h.a = (party == 1) ? art.a1 : art.a2;
  h.b = (party == 1) ? art.b1 : art.b2;
  h.c = (party == 1) ? art.c1 : art.c2;
  return h;
}

const Dealer::CorrArt& Dealer::corr_at(uint64_t idx, size_t n) {
  if (idx >= corrs_.size()) {
    check_budget(MaterialKind::shuffle_corr, idx);
    Rng rng = rng_for(MaterialKind::shuffle_corr, idx);
    CorrArt art;
    art.n = n;
    if (!pinned_pis_.empty()) {
      art.pi = std::move(pinned_pis_.front());
      pinned_pis_.pop_front();
      if (art.pi.size() != n) throw ContractError("pinned permutation length mismatch");
    } else {
      art.pi = random_perm(n, rng);
    }
    art.tau1 = random_perm(n, rng);
    art.tau2 = random_perm(n, rng);
    art.rho1 = kernels::compose_perm(art.pi, kernels::invert_perm(art.tau2));
    art.rho2 = kernels::compose_perm(art.pi, kernels::invert_perm(art.tau1));
    corrs_.push_back(std::move(art));
  }
  const CorrArt& art = corrs_[idx];
  if (art.n != n) throw DesyncError("shuffle correlation request length mismatch between parties");
  return art;
}

ShuffleCorrHalf Dealer::take_shuffle_corr(int party, size_t n, const std::string& phase) {
  if (n == 0) throw ContractError("shuffle correlation needs n >= 1");
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = next_index(party, MaterialKind::shuffle_corr);
  const bool fresh_mint = idx >= corrs_.size();
  const CorrArt& art = corr_at(idx, n);
  if (fresh_mint) charge_offline(phase, 2 * n);
  ShuffleCorrHalf h;
  h.id = make_id(MaterialKind::shuffle_corr, idx);
  h.n = n;
  h.rho = (party == 1) ? art.rho1 : art.rho2;
  h.tau = (party == 1) ? art.tau1 : art.tau2;
  return h;
}

const Dealer::MaskArt& Dealer::mask_at(uint64_t idx, uint64_t corr_id, bool inverse, size_t rows) {
  if (idx >= masks_.size()) {
    check_budget(MaterialKind::shuffle_mask, idx);
    const uint64_t corr_idx = corr_id & kIndexMask;
    if (corr_idx >= corrs_.size()) throw ContractError("shuffle masks requested for unknown correlation");
    const CorrArt& corr = corrs_[corr_idx];
    std::vector<size_t> r1 = inverse ? kernels::invert_perm(corr.tau1) : corr.rho1;
    std::vector<size_t> r2 = inverse ? kernels::invert_perm(corr.tau2) : corr.rho2;
    Rng rng = rng_for(MaterialKind::shuffle_mask, idx);
    MaskArt art;
    art.corr_id = corr_id;
    art.inverse = inverse;
    art.rows = rows;
    art.n = corr.n;
    art.a1 = RingMatrix::random(rows, corr.n, spec_, rng);
    art.a2 = RingMatrix::random(rows, corr.n, spec_, rng);
    RingMatrix c = RingMatrix::random(rows, corr.n, spec_, rng);
    art.b1 = kernels::add(kernels::apply_perm_rows(r1, art.a2), c, spec_);
    art.b2 = kernels::sub(kernels::apply_perm_rows(r2, art.a1), c, spec_);
    masks_.push_back(std::move(art));
  }
  const MaskArt& art = masks_[idx];
  if (art.corr_id != corr_id || art.inverse != inverse || art.rows != rows)
    throw DesyncError("shuffle mask request mismatch between parties");
  return art;
}

ShuffleMaskHalf Dealer::take_shuffle_masks(int party, const ShuffleCorrHalf& corr, bool inverse,
                                           size_t rows, const std::string& phase) {
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = next_index(party, MaterialKind::shuffle_mask);
  const bool fresh_mint = idx >= masks_.size();
  const MaskArt& art = mask_at(idx, corr.id, inverse, rows);
  if (fresh_mint) charge_offline(phase, 2 * rows * art.n);
  ShuffleMaskHalf h;
  h.id = make_id(MaterialKind::shuffle_mask, idx);
  h.corr_id = corr.id;
  h.inverse = inverse;
  h.a = (party == 1) ? art.a1 : art.a2;
  h.b = (party == 1) ? art.b1 : art.b2;
  return h;
}

const Dealer::TruncArt& Dealer::trunc_at(uint64_t idx, size_t count, int f) {
  if (idx >= truncs_.size()) {
    check_budget(MaterialKind::trunc_batch, idx);
    Rng rng = rng_for(MaterialKind::trunc_batch, idx);
    TruncArt art;
    art.count = count;
    art.f = f;
    art.r.resize(count);
    art.u.resize(count);
    std::vector<Ring> shifted(count);
    for (size_t i = 0; i < count; ++i) {
      art.r[i] = spec_.random(rng);
      art.u[i] = spec_.random(rng);
      shifted[i] = spec_.arith_shift(art.r[i], f);
    }
    std::tie(art.r1, art.r2) = split_vec(art.r, spec_, rng);
    std::tie(art.s1, art.s2) = split_vec(shifted, spec_, rng);
    truncs_.push_back(std::move(art));
  }
  const TruncArt& art = truncs_[idx];
  if (art.count != count || art.f != f)
    throw DesyncError("truncation batch request mismatch between parties");
  return art;
}

TruncBatchHalf Dealer::take_trunc_batch(int party, size_t count, int f, const std::string& phase) {
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = next_index(party, MaterialKind::trunc_batch);
  const bool fresh_mint = idx >= truncs_.size();
  const TruncArt& art = trunc_at(idx, count, f);
  if (fresh_mint) charge_offline(phase, 2 * count);
  TruncBatchHalf h;
  h.id = make_id(MaterialKind::trunc_batch, idx);
  h.f = f;
  h.r = (party == 1) ? art.r1 : art.r2;
  h.r_shifted = (party == 1) ? art.s1 : art.s2;
  return h;
}

const Dealer::DpFlipArt& Dealer::dp_at(uint64_t idx, size_t n, double eps) {
  if (idx >= dps_.size()) {
    check_budget(MaterialKind::dp_flip, idx);
    Rng rng = rng_for(MaterialKind::dp_flip, idx);
    DpFlipArt art;
    art.n = n;
    art.eps = eps;
    art.flips = dp_flip_count(eps, dp_flip_gain_, n, rng);
    std::vector<Ring> p(n, 0);
    // Uniform distinct positions via partial Fisher-Yates.
    std::vector<size_t> pos(n);
    for (size_t i = 0; i < n; ++i) pos[i] = i;
    for (size_t i = 0; i < art.flips; ++i) {
      std::swap(pos[i], pos[i + rng.next_below(n - i)]);
      p[pos[i]] = 1;
    }
    std::tie(art.p1, art.p2) = split_vec(p, spec_, rng);
    dps_.push_back(std::move(art));
  }
  const DpFlipArt& art = dps_[idx];
  if (art.n != n || art.eps != eps)
    throw DesyncError("dp flip request mismatch between parties");
  return art;
}

DpFlipHalf Dealer::take_dp_flip(int party, size_t n, double eps, const std::string& phase) {
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = next_index(party, MaterialKind::dp_flip);
  const bool fresh_mint = idx >= dps_.size();
  const DpFlipArt& art = dp_at(idx, n, eps);
  if (fresh_mint) charge_offline(phase, n);
  DpFlipHalf h;
  h.id = make_id(MaterialKind::dp_flip, idx);
  h.p = (party == 1) ? art.p1 : art.p2;
  return h;
}

std::pair<BeaverHalf, BeaverHalf> Dealer::deal_beaver(size_t m, size_t n, size_t p) {
  BeaverHalf h1 = take_beaver(1, m, n, p, "setup");
  BeaverHalf h2 = take_beaver(2, m, n, p, "setup");
  return {std::move(h1), std::move(h2)};
}

std::pair<ShuffleCorrHalf, ShuffleCorrHalf> Dealer::deal_shuffle(size_t n) {
  ShuffleCorrHalf h1 = take_shuffle_corr(1, n, "setup");
  ShuffleCorrHalf h2 = take_shuffle_corr(2, n, "setup");
  return {std::move(h1), std::move(h2)};
}

std::pair<ShuffleMaskHalf, ShuffleMaskHalf> Dealer::deal_shuffle_masks(const ShuffleCorrHalf& c1,
                                                                       bool inverse, size_t rows) {
  ShuffleMaskHalf h1 = take_shuffle_masks(1, c1, inverse, rows, "setup");
  ShuffleMaskHalf h2 = take_shuffle_masks(2, c1, inverse, rows, "setup");
  return {std::move(h1), std::move(h2)};
}

std::pair<TruncBatchHalf, TruncBatchHalf> Dealer::deal_truncation(size_t count, int f) {
  TruncBatchHalf h1 = take_trunc_batch(1, count, f, "setup");
  TruncBatchHalf h2 = take_trunc_batch(2, count, f, "setup");
  return {std::move(h1), std::move(h2)};
}

std::vector<size_t> Dealer::peek_pi(uint64_t corr_id) const {
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = corr_id & kIndexMask;
  if ((corr_id >> 56) != static_cast<uint64_t>(MaterialKind::shuffle_corr) || idx >= corrs_.size())
    throw ContractError("peek_pi: unknown correlation id");
  return corrs_[idx].pi;
}

void Dealer::pin_next_pi(std::vector<size_t> pi) {
  std::lock_guard<std::mutex> lk(mu_);
  pinned_pis_.push_back(std::move(pi));
}

std::pair<const std::vector<Ring>*, const std::vector<Ring>*> Dealer::trunc_plain(uint64_t id) const {
  std::lock_guard<std::mutex> lk(mu_);
  const uint64_t idx = id & kIndexMask;
  if ((id >> 56) != static_cast<uint64_t>(MaterialKind::trunc_batch) || idx >= truncs_.size())
    throw ContractError("trunc_plain: unknown truncation batch id");
  return {&truncs_[idx].r, &truncs_[idx].u};
}

uint64_t Dealer::minted_count(MaterialKind kind) const {
  std::lock_guard<std::mutex> lk(mu_);
  switch (kind) {
    case MaterialKind::beaver: return beavers_.size();
    case MaterialKind::elem_triple: return elems_.size();
    case MaterialKind::shuffle_corr: return corrs_.size();
    case MaterialKind::shuffle_mask: return masks_.size();
    case MaterialKind::trunc_batch: return truncs_.size();
    case MaterialKind::dp_flip: return dps_.size();
  }
  return 0;
}

namespace {

constexpr uint64_t kCacheMagic = 0x53'4d'50'43'44'4c'52'31ULL;  // "SMPCDLR1"
constexpr uint32_t kCacheVersion = 1;

void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
uint32_t get_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
template <typename T>
void put_vec(std::ostream& os, const std::vector<T>& v) {
  put_u64(os, v.size());
  for (const T& x : v) put_u64(os, static_cast<uint64_t>(x));
}
template <typename T>
std::vector<T> get_vec(std::istream& is) {
  std::vector<T> v(get_u64(is));
  for (auto& x : v) x = static_cast<T>(get_u64(is));
  return v;
}
void put_mat(std::ostream& os, const RingMatrix& m) {
  put_u64(os, m.rows);
  put_u64(os, m.cols);
  put_vec(os, m.v);
}
RingMatrix get_mat(std::istream& is) {
  RingMatrix m;
  m.rows = get_u64(is);
  m.cols = get_u64(is);
  m.v = get_vec<Ring>(is);
  return m;
}

}  // namespace

void Dealer::save_cache(const std::string& path, uint64_t scenario_hash) const {
  std::lock_guard<std::mutex> lk(mu_);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write dealer cache: " + path);
  put_u64(os, kCacheMagic);
  put_u32(os, kCacheVersion);
  put_u64(os, scenario_hash);
  put_u64(os, seed_);
  put_u64(os, beavers_.size());
  for (const auto& a : beavers_) {
    put_u64(os, a.m);
    put_u64(os, a.n);
    put_u64(os, a.p);
    for (const RingMatrix* m : {&a.a1, &a.a2, &a.b1, &a.b2, &a.c1, &a.c2}) put_mat(os, *m);
  }
  put_u64(os, elems_.size());
  for (const auto& a : elems_) {
    put_u64(os, a.n);
    for (const auto* v : {&a.a1, &a.a2, &a.b1, &a.b2, &a.c1, &a.c2}) put_vec(os, *v);
  }
  put_u64(os, corrs_.size());
  for (const auto& a : corrs_) {
    put_u64(os, a.n);
    for (const auto* v : {&a.pi, &a.tau1, &a.tau2, &a.rho1, &a.rho2}) put_vec(os, *v);
  }
  put_u64(os, masks_.size());
  for (const auto& a : masks_) {
    put_u64(os, a.corr_id);
    put_u64(os, a.inverse ? 1 : 0);
    put_u64(os, a.rows);
    put_u64(os, a.n);
    for (const RingMatrix* m : {&a.a1, &a.a2, &a.b1, &a.b2}) put_mat(os, *m);
  }
  put_u64(os, truncs_.size());
  for (const auto& a : truncs_) {
    put_u64(os, a.count);
    put_u64(os, static_cast<uint64_t>(a.f));
    for (const auto* v : {&a.r, &a.u, &a.r1, &a.r2, &a.s1, &a.s2}) put_vec(os, *v);
  }
  put_u64(os, dps_.size());
  for (const auto& a : dps_) {
    put_u64(os, a.n);
    uint64_t eps_bits;
    static_assert(sizeof(double) == 8);
    std::memcpy(&eps_bits, &a.eps, 8);
    put_u64(os, eps_bits);
    put_u64(os, a.flips);
    put_vec(os, a.p1);
    put_vec(os, a.p2);
  }
}

bool Dealer::load_cache(const std::string& path, uint64_t scenario_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  if (get_u64(is) != kCacheMagic) return false;
  if (get_u32(is) != kCacheVersion) return false;
  if (get_u64(is) != scenario_hash) return false;
  if (get_u64(is) != seed_) return false;

  std::lock_guard<std::mutex> lk(mu_);
  beavers_.clear();
  elems_.clear();
  corrs_.clear();
  masks_.clear();
  truncs_.clear();
  dps_.clear();

  for (uint64_t i = 0, n = get_u64(is); i < n; ++i) {
    BeaverArt a;
    a.m = get_u64(is);
    a.n = get_u64(is);
    a.p = get_u64(is);
    a.a1 = get_mat(is);
    a.a2 = get_mat(is);
    a.b1 = get_mat(is);
    a.b2 = get_mat(is);
    a.c1 = get_mat(is);
    a.c2 = get_mat(is);
    beavers_.push_back(std::move(a));
  }
  for (uint64_t i = 0, n = get_u64(is); i < n; ++i) {
    ElemTripleArt a;
    a.n = get_u64(is);
    a.a1 = get_vec<Ring>(is);
    a.a2 = get_vec<Ring>(is);
    a.b1 = get_vec<Ring>(is);
    a.b2 = get_vec<Ring>(is);
    a.c1 = get_vec<Ring>(is);
    a.c2 = get_vec<Ring>(is);
    elems_.push_back(std::move(a));
  }
  for (uint64_t i = 0, n = get_u64(is); i < n; ++i) {
    CorrArt a;
    a.n = get_u64(is);
    a.pi = get_vec<size_t>(is);
    a.tau1 = get_vec<size_t>(is);
    a.tau2 = get_vec<size_t>(is);
    a.rho1 = get_vec<size_t>(is);
    a.rho2 = get_vec<size_t>(is);
    corrs_.push_back(std::move(a));
  }
  for (uint64_t i = 0, n = get_u64(is); i < n; ++i) {
    MaskArt a;
    a.corr_id = get_u64(is);
    a.inverse = get_u64(is) != 0;
    a.rows = get_u64(is);
    a.n = get_u64(is);
    a.a1 = get_mat(is);
    a.a2 = get_mat(is);
    a.b1 = get_mat(is);
    a.b2 = get_mat(is);
    masks_.push_back(std::move(a));
  }
  for (uint64_t i = 0, n = get_u64(is); i < n; ++i) {
    TruncArt a;
    a.count = get_u64(is);
    a.f = static_cast<int>(get_u64(is));
    a.r = get_vec<Ring>(is);
    a.u = get_vec<Ring>(is);
    a.r1 = get_vec<Ring>(is);
    a.r2 = get_vec<Ring>(is);
    a.s1 = get_vec<Ring>(is);
    a.s2 = get_vec<Ring>(is);
    truncs_.push_back(std::move(a));
  }
  for (uint64_t i = 0, n = get_u64(is); i < n; ++i) {
    DpFlipArt a;
    a.n = get_u64(is);
    uint64_t eps_bits = get_u64(is);
    std::memcpy(&a.eps, &eps_bits, 8);
    a.flips = get_u64(is);
    a.p1 = get_vec<Ring>(is);
    a.p2 = get_vec<Ring>(is);
    dps_.push_back(std::move(a));
  }
  return is.good();
}

}  // namespace smpc
