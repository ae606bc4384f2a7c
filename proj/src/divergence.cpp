#include "cfdro/divergence.hpp"

#include <cmath>
#include <limits>

#include "cfdro/errors.hpp"

namespace cfdro {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string_view to_string(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::ChiSquare: return "chi2";
    case DivergenceKind::KL: return "kl";
    case DivergenceKind::Burg: return "burg";
    case DivergenceKind::Hellinger: return "hellinger";
  }
  return "unknown";
}

std::optional<DivergenceKind> parse_divergence(std::string_view name) {
  for (auto kind : kAllDivergences)
    if (name == to_string(kind)) return kind;
  if (name == "chisquare" || name == "chi-square") return DivergenceKind::ChiSquare;
  return std::nullopt;
}

double phi(DivergenceKind kind, double t) {
  if (!(t >= 0.0)) throw DomainError("phi: argument must be nonnegative");
  switch (kind) {
    case DivergenceKind::ChiSquare: return (t - 1.0) * (t - 1.0);
    case DivergenceKind::KL: return t == 0.0 ? 1.0 : t * std::log(t) - t + 1.0;
    case DivergenceKind::Burg:
      if (t == 0.0) throw DomainError("phi: Burg entropy is undefined at 0");
      return -std::log(t) + t - 1.0;
    case DivergenceKind::Hellinger: {
      const double r = std::sqrt(t) - 1.0;
      return r * r;
    }
  }
  return kInf;
}

double phi_curvature(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::ChiSquare: return 2.0;
    case DivergenceKind::Hellinger: return 0.5;
    default: return 1.0;
  }
}

double conjugate_domain_bound(DivergenceKind kind) {
  switch (kind) {
    case DivergenceKind::Burg:
    case DivergenceKind::Hellinger: return 1.0;
    default: return kInf;
  }
}

double phi_conjugate(DivergenceKind kind, double s) {
  switch (kind) {
    case DivergenceKind::ChiSquare: return s >= -2.0 ? s + 0.25 * s * s : -1.0;
    case DivergenceKind::KL: return std::expm1(s);
    case DivergenceKind::Burg: return s < 1.0 ? -std::log1p(-s) : kInf;
    case DivergenceKind::Hellinger: return s < 1.0 ? s / (1.0 - s) : kInf;
  }
  return kInf;
}

double phi_conjugate_derivative(DivergenceKind kind, double s) {
  switch (kind) {
    case DivergenceKind::ChiSquare: return s >= -2.0 ? 1.0 + 0.5 * s : 0.0;
    case DivergenceKind::KL: return std::exp(s);
    case DivergenceKind::Burg: return s < 1.0 ? 1.0 / (1.0 - s) : kInf;
    case DivergenceKind::Hellinger: return s < 1.0 ? 1.0 / ((1.0 - s) * (1.0 - s)) : kInf;
  }
  return kInf;
}

double phi_conjugate_second_derivative(DivergenceKind kind, double s) {
  switch (kind) {
    case DivergenceKind::ChiSquare: return s >= -2.0 ? 0.5 : 0.0;
    case DivergenceKind::KL: return std::exp(s);
    case DivergenceKind::Burg: return s < 1.0 ? 1.0 / ((1.0 - s) * (1.0 - s)) : kInf;
    case DivergenceKind::Hellinger: {
      if (!(s < 1.0)) return kInf;
      const double r = 1.0 - s;
      return 2.0 / (r * r * r);
    }
  }
  return kInf;
}

double scaled_conjugate(DivergenceKind kind, double gamma, double s) {
  if (!(gamma >= 0.0)) throw DomainError("scaled_conjugate: gamma must be nonnegative");
  if (gamma == 0.0) return s > 0.0 ? kInf : 0.0;
  const double u = s / gamma;
  if (!(u < conjugate_domain_bound(kind))) return kInf;
  const double value = gamma * phi_conjugate(kind, u);
  return std::isnan(value) ? kInf : value;
}

ScaledConjugateGrad scaled_conjugate_grad(DivergenceKind kind, double gamma, double s) {
  if (!(gamma > 0.0)) throw DomainError("scaled_conjugate_grad: gamma must be positive");
  const double u = s / gamma;
  if (!(u < conjugate_domain_bound(kind)))
    throw DomainError("scaled_conjugate_grad: s / gamma on or beyond the conjugate domain boundary");
  const double d = phi_conjugate_derivative(kind, u);
  const double value = phi_conjugate(kind, u);
  if (!std::isfinite(d) || !std::isfinite(value))
    throw DomainError("scaled_conjugate_grad: conjugate overflow");
  return {d, value - u * d};
}

double divergence_value(DivergenceKind kind, std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw DomainError("divergence_value: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] < 0.0 || p[i] < 0.0) throw DomainError("divergence_value: negative mass");
    if (p[i] == 0.0) {
      if (q[i] > 0.0) throw DomainError("divergence_value: q is not absolutely continuous w.r.t. p");
      continue;
    }
    const double t = q[i] / p[i];
    if (kind == DivergenceKind::Burg && t == 0.0) return kInf;
    total += p[i] * phi(kind, t);
  }
  return total;
}

double divergence_from_uniform(DivergenceKind kind, std::span<const double> q) {
  const double n = static_cast<double>(q.size());
  double total = 0.0;
  for (double qi : q) {
    if (qi < 0.0) throw DomainError("divergence_from_uniform: negative mass");
    if (kind == DivergenceKind::Burg && qi == 0.0) return kInf;
    total += phi(kind, n * qi);
  }
  return total / n;
}

}  // namespace cfdro
