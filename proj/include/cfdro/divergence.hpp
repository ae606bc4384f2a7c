#pragma once

// Coherent phi-divergences: generator phi, its Fenchel conjugate phi*, and the
// perspective-scaled conjugate (gamma phi)*(s) = gamma phi*(s / gamma) that the
// dual programs sum over samples.
//
// Conjugates are extended-real valued: outside their domain (s >= 1 for Burg
// and Hellinger) they return +infinity so that line searches can treat the
// boundary as a barrier. No function in this header returns NaN for finite input.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace cfdro {

enum class DivergenceKind { ChiSquare, KL, Burg, Hellinger };

inline constexpr std::array<DivergenceKind, 4> kAllDivergences = {
    DivergenceKind::ChiSquare, DivergenceKind::KL, DivergenceKind::Burg, DivergenceKind::Hellinger};

/// Short stable name: "chi2", "kl", "burg", "hellinger".
std::string_view to_string(DivergenceKind kind);
std::optional<DivergenceKind> parse_divergence(std::string_view name);

/// phi(t). Throws DomainError for t < 0 (and t == 0 for Burg).
double phi(DivergenceKind kind, double t);

/// phi*(s); +inf outside the conjugate domain.
double phi_conjugate(DivergenceKind kind, double s);

/// (phi*)'(s); +inf outside the conjugate domain.
double phi_conjugate_derivative(DivergenceKind kind, double s);

/// (phi*)''(s); +inf outside the conjugate domain. Zero on the flat chi-square branch.
double phi_conjugate_second_derivative(DivergenceKind kind, double s);

/// phi''(1): 2 for chi-square, 1 for KL and Burg, 1/2 for Hellinger.
double phi_curvature(DivergenceKind kind);

/// Supremum of s accepted by phi*: 1 for Burg and Hellinger, +inf otherwise.
double conjugate_domain_bound(DivergenceKind kind);

/// (gamma phi)*(s) with the convention (0 phi)*(s) = +inf if s > 0, 0 otherwise.
/// Throws DomainError for gamma < 0.
double scaled_conjugate(DivergenceKind kind, double gamma, double s);

struct ScaledConjugateGrad {
  double d_s;
  double d_gamma;
};

/// Analytic partials of gamma phi*(s / gamma). Requires gamma > 0 and s / gamma
/// strictly inside the conjugate domain; throws DomainError otherwise so callers
/// can back off.
ScaledConjugateGrad scaled_conjugate_grad(DivergenceKind kind, double gamma, double s);

/// d_phi(q, p) = sum_i p_i phi(q_i / p_i) with 0 * phi(0/0) = 0.
/// Throws DomainError if q is not absolutely continuous w.r.t. p or lengths differ.
/// Returns +inf for Burg when some q_i = 0 < p_i.
double divergence_value(DivergenceKind kind, std::span<const double> q, std::span<const double> p);

/// d_phi(q, 1_n) for the uniform reference, as used by the ambiguity set.
double divergence_from_uniform(DivergenceKind kind, std::span<const double> q);

}  // namespace cfdro
