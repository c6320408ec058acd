#include "lapprod/products.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <set>

#include <fmt/format.h>

#include "lapprod/error.hpp"
#include "lapprod/hashing.hpp"
#include "lapprod/parallel.hpp"

namespace lapprod {

SpectralField::SpectralField(std::shared_ptr<const EigenBasis> basis, Field values)
    : basis_(std::move(basis)), values_(std::move(values)), cache_(std::make_shared<Cache>()) {
  if (!basis_) throw InvalidArgument("SpectralField: null basis");
  if (values_.size() != basis_->modes.rows())
    throw InvalidArgument(fmt::format("SpectralField: {} values for a basis on {} unknowns",
                                      values_.size(), basis_->modes.rows()));
}

const Eigen::VectorXd& SpectralField::coeffs() const {
  std::call_once(cache_->once, [this] {
    cache_->coeffs = expand(*basis_, values_);
    cache_->ready = true;
  });
  return cache_->coeffs;
}

bool SpectralField::has_coeffs() const {
  return std::atomic_ref<bool>(cache_->ready).load(std::memory_order_acquire);
}

SpectralField mode_field(std::shared_ptr<const EigenBasis> basis, int index) {
  Field v = basis->mode(index);
  return SpectralField(std::move(basis), std::move(v));
}

SpectralField pointwise_product(std::span<const SpectralField> fields) {
  if (fields.size() < 2) throw InvalidArgument("pointwise_product needs at least two factors");
  const auto& grid = fields.front().basis().grid;
  Field v = fields.front().values();
  for (std::size_t i = 1; i < fields.size(); ++i) {
    if (fields[i].basis().grid != grid && fields[i].basis().grid->hash() != grid->hash())
      throw InvalidArgument("pointwise_product: factors live on different grids");
    v = v.cwiseProduct(fields[i].values());
  }
  return SpectralField(fields.front().basis_ptr(), std::move(v));
}

Field mode_product(const EigenBasis& basis, std::span<const int> tuple) {
  if (tuple.empty()) throw InvalidArgument("mode_product: empty tuple");
  Field v = basis.mode(tuple[0]);
  for (std::size_t i = 1; i < tuple.size(); ++i) v = v.cwiseProduct(basis.mode(tuple[i]));
  return v;
}

Eigen::VectorXd expand(const EigenBasis& basis, const Field& f) {
  if (f.size() != basis.modes.rows())
    throw InvalidArgument("expand: field and basis live on different grids");
  return basis.modes.transpose() * basis.grid->weights.cwiseProduct(f);
}

namespace {

void check_nu(const EigenBasis& basis, int nu) {
  if (nu < 0 || nu > basis.max_index())
    throw InvalidArgument(fmt::format("cutoff nu = {} outside [0, {}] for this basis", nu,
                                      basis.max_index()));
}

// Number of basis columns inside E_ν.
Eigen::Index kept_columns(const EigenBasis& basis, int nu) {
  return std::max<Eigen::Index>(0, nu - basis.origin + 1);
}

double sobolev_weight(double lambda, double sigma) {
  return std::pow(1.0 + lambda * lambda, sigma);
}

}  // namespace

SpectralField project_E(const SpectralField& f, int nu) {
  const EigenBasis& b = f.basis();
  check_nu(b, nu);
  const Eigen::Index keep = kept_columns(b, nu);
  Field v = b.modes.leftCols(keep) * f.coeffs().head(keep);
  return SpectralField(f.basis_ptr(), std::move(v));
}

SpectralField remainder_R(const SpectralField& f, int nu) {
  const SpectralField e = project_E(f, nu);
  return SpectralField(f.basis_ptr(), f.values() - e.values());
}

std::string NormSpec::name() const {
  switch (kind) {
    case NormKind::L2: return "L2";
    case NormKind::Linf: return "Linf";
    case NormKind::Hminus1: return "Hminus1";
    case NormKind::Hs: return fmt::format("Hs({})", sigma);
  }
  return "?";
}

NormSpec NormSpec::parse(const std::string& text) {
  if (text == "L2") return l2();
  if (text == "Linf") return linf();
  if (text == "Hminus1") return hminus1();
  if (text.size() > 4 && text.rfind("Hs(", 0) == 0 && text.back() == ')') {
    const std::string body = text.substr(3, text.size() - 4);
    char* end = nullptr;
    const double s = std::strtod(body.c_str(), &end);
    if (end && *end == '\0' && !body.empty()) return hs(s);
  }
  throw InvalidArgument("unknown norm kind '" + text + "'");
}

double norm(const EigenBasis& basis, const Eigen::VectorXd& coeffs, const NormSpec& kind) {
  if (coeffs.size() != basis.size())
    throw InvalidArgument("norm: coefficient count does not match basis");
  switch (kind.kind) {
    case NormKind::L2: return coeffs.norm();
    case NormKind::Hs:
    case NormKind::Hminus1: {
      const double sigma = kind.kind == NormKind::Hs ? kind.sigma : -1.0;
      double s = 0.0;
      for (Eigen::Index k = 0; k < coeffs.size(); ++k)
        s += sobolev_weight(basis.freqs[k], sigma) * coeffs[k] * coeffs[k];
      return std::sqrt(s);
    }
    case NormKind::Linf:
      break;
  }
  throw InvalidArgument("norm: Linf needs nodal values, not coefficients");
}

double norm(const SpectralField& f, const NormSpec& kind) {
  const EigenBasis& b = f.basis();
  switch (kind.kind) {
    case NormKind::L2: return std::sqrt(inner(*b.grid, f.values(), f.values()));
    case NormKind::Linf: return sup_norm(*b.grid, f.values());
    case NormKind::Hs:
      if (kind.sigma == 0.0) return std::sqrt(inner(*b.grid, f.values(), f.values()));
      [[fallthrough]];
    case NormKind::Hminus1:
      if (!b.full_spectrum)
        throw InvalidArgument(fmt::format(
            "spectral truncation unsafe: {} needs a full-spectrum basis", kind.name()));
      return norm(b, f.coeffs(), kind);
  }
  return 0.0;
}

Bracket hminus1_bracket(const SpectralField& f, int nu) {
  const EigenBasis& b = f.basis();
  check_nu(b, nu);
  const Eigen::VectorXd& c = f.coeffs();
  const Eigen::Index keep = kept_columns(b, nu);
  double lower2 = 0.0;
  double captured = 0.0;
  for (Eigen::Index k = keep; k < c.size(); ++k) {
    lower2 += c[k] * c[k] / (1.0 + b.freqs[k] * b.freqs[k]);
    captured += c[k] * c[k];
  }
  double upper2 = lower2;
  if (!b.full_spectrum) {
    const Field r = remainder_R(f, nu).values();
    const double tail = std::max(0.0, inner(*b.grid, r, r) - captured);
    const double top = b.freqs[b.size() - 1];
    upper2 += tail / (1.0 + top * top);
  }
  return {std::sqrt(lower2), std::sqrt(upper2)};
}

std::vector<std::vector<int>> all_tuples(int length, int lo, int hi) {
  std::vector<std::vector<int>> out;
  if (length < 1 || hi < lo) return out;
  std::vector<int> t(static_cast<std::size_t>(length), lo);
  while (true) {
    out.push_back(t);
    int pos = length - 1;
    while (pos >= 0 && t[pos] == hi) --pos;
    if (pos < 0) break;
    ++t[pos];
    for (int q = pos + 1; q < length; ++q) t[q] = t[pos];
  }
  return out;
}

std::string basis_fingerprint(const EigenBasis& basis) {
  Sha256 h;
  const std::string head = basis.grid->hash() + to_string(basis.source);
  h.update(head.data(), head.size());
  h.update(basis.freqs.data(), sizeof(double) * static_cast<std::size_t>(basis.freqs.size()));
  return h.hex_digest().substr(0, 16);
}

std::vector<RemainderReport> remainder_sweep(std::shared_ptr<const EigenBasis> basis_ptr,
                                             const std::vector<std::vector<int>>& tuples_in,
                                             const std::vector<int>& nus_in,
                                             const std::vector<NormSpec>& kinds,
                                             const SweepOptions& options) {
  if (!basis_ptr) throw InvalidArgument("remainder_sweep: null basis");
  const EigenBasis& b = *basis_ptr;
  if (tuples_in.empty() || nus_in.empty() || kinds.empty())
    throw InvalidArgument("remainder_sweep: tuples, nus and kinds must be nonempty");

  std::vector<std::vector<int>> tuples = tuples_in;
  const int limit = b.source == BasisSource::numeric ? resolution_limit(b) : b.max_index();
  for (auto& t : tuples) {
    if (t.size() < 2) throw InvalidArgument("remainder_sweep: tuples need at least two entries");
    std::sort(t.begin(), t.end());
    b.column(t.front());
    b.column(t.back());
    if (!options.override_resolution_limit && t.back() > limit)
      throw InvalidArgument(fmt::format(
          "tuple index {} exceeds the resolution limit {}; refine the grid or set "
          "override_resolution_limit",
          t.back(), limit));
  }
  std::sort(tuples.begin(), tuples.end());
  tuples.erase(std::unique(tuples.begin(), tuples.end()), tuples.end());

  std::vector<int> nus = nus_in;
  std::sort(nus.begin(), nus.end());
  nus.erase(std::unique(nus.begin(), nus.end()), nus.end());
  for (int nu : nus) check_nu(b, nu);

  bool need_nodal = false;
  for (const auto& k : kinds) {
    if (k.kind == NormKind::Hs && k.sigma != 0.0 && !b.full_spectrum)
      throw InvalidArgument(
          fmt::format("spectral truncation unsafe: {} needs a full-spectrum basis", k.name()));
    if (k.kind == NormKind::Linf || !b.full_spectrum) need_nodal = true;
  }
  if (options.n && *options.n < 1) throw InvalidArgument("remainder_sweep: n must be positive");

  const std::string id = basis_fingerprint(b);
  const Eigen::VectorXd& w = b.grid->weights;
  const std::size_t per_tuple = nus.size() * kinds.size();
  std::vector<RemainderReport> reports(tuples.size() * per_tuple);

  parallel_for(tuples.size(), options.threads, [&](std::size_t ti) {
    const auto& t = tuples[ti];
    const Field f = mode_product(b, t);
    const Eigen::VectorXd c = expand(b, f);
    const Eigen::Index K = c.size();
    // tail2[col] = Σ_{k ≥ col} c_k², summed from the top for accuracy.
    Eigen::VectorXd tail2(K + 1);
    tail2[K] = 0.0;
    for (Eigen::Index k = K - 1; k >= 0; --k) tail2[k] = tail2[k + 1] + c[k] * c[k];

    Field r = f;
    Eigen::Index col = 0;
    const int n = options.n.value_or(t.back());
    for (std::size_t ni = 0; ni < nus.size(); ++ni) {
      const int nu = nus[ni];
      const Eigen::Index keep = kept_columns(b, nu);
      double nodal_l2 = 0.0;
      double nodal_max = 0.0;
      if (need_nodal) {
        for (; col < keep; ++col) r -= c[col] * b.modes.col(col);
        nodal_l2 = std::sqrt(r.cwiseProduct(w).dot(r));
        nodal_max = r.cwiseAbs().maxCoeff();
      }
      for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
        const NormSpec& kind = kinds[ki];
        RemainderReport rep;
        rep.tuple = t;
        rep.nu = nu;
        rep.n = n;
        rep.kind = kind;
        rep.basis_id = id;
        rep.dim = b.grid->dim();
        rep.dirichlet = !b.periodic();
        rep.lambda_n = (n >= b.origin && n <= b.max_index()) ? b.frequency(n) : 0.0;
        rep.lambda_nu = nu >= b.origin ? b.frequency(nu) : 0.0;
        switch (kind.kind) {
          case NormKind::L2:
            rep.value = b.full_spectrum ? std::sqrt(tail2[keep]) : nodal_l2;
            break;
          case NormKind::Linf:
            rep.value = nodal_max;
            break;
          case NormKind::Hs: {
            if (kind.sigma == 0.0) {
              rep.value = b.full_spectrum ? std::sqrt(tail2[keep]) : nodal_l2;
              break;
            }
            double s = 0.0;
            for (Eigen::Index k = K - 1; k >= keep; --k)
              s += sobolev_weight(b.freqs[k], kind.sigma) * c[k] * c[k];
            rep.value = std::sqrt(s);
            break;
          }
          case NormKind::Hminus1: {
            double lower2 = 0.0;
            for (Eigen::Index k = K - 1; k >= keep; --k)
              lower2 += c[k] * c[k] / (1.0 + b.freqs[k] * b.freqs[k]);
            double upper2 = lower2;
            if (!b.full_spectrum) {
              const double top = b.freqs[K - 1];
              upper2 += std::max(0.0, nodal_l2 * nodal_l2 - tail2[keep]) / (1.0 + top * top);
            }
            rep.value = std::sqrt(lower2);
            rep.value_upper = std::sqrt(upper2);
            break;
          }
        }
        reports[ti * per_tuple + ni * kinds.size() + ki] = std::move(rep);
      }
    }
  });
  return reports;
}

}  // namespace lapprod
