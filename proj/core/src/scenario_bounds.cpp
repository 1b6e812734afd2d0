// Root finding for the sample-complexity polynomial
//
//   (beta / (N+1)) * sum_{l=k}^{N} C(l,k) t^{l-k}  =  C(N,k) t^{N-k},
//
// whose unique root t(k) in (0,1) yields the violation level eps(k) = 1 - t(k).
// Raw evaluation overflows fast (C(500,250) ~ 1e149), so we divide through by
// the leading term C(N,k) t^{N-k} and work in log space:
//
//   h(t) = (beta/(N+1)) * sum_l exp( lnC(l,k) - lnC(N,k) + (l-N) ln t ) - 1.
//
// Every summand is positive and h is strictly decreasing on (0,1), with
// h(0+) = +inf and h(1) = beta/(k+1) - 1 < 0, so bisection is bracket-safe.
// The sum itself is accumulated with a running max-exponent shift so that
// huge t^(l-N) factors near t = 0 cannot overflow.

#include "svi/scenario_bounds.hpp"

#include <cmath>
#include <limits>

#include "svi/errors.hpp"
#include "svi/parallel.hpp"

namespace svi::scenario_bounds {

namespace {

void validate(const BoundQuery& q) {
  if (q.n_samples < 1) throw InvalidQueryError("scenario bound: n_samples must be >= 1");
  if (q.k < 0) throw InvalidQueryError("scenario bound: k must be >= 0");
  if (!std::isfinite(q.beta) || !(q.beta > 0.0 && q.beta < 1.0))
    throw InvalidQueryError("scenario bound: beta must lie strictly in (0, 1)");
}

// Precomputed log-factorials shared by every evaluation for one (k, N, beta).
class StablePolynomial {
 public:
  explicit StablePolynomial(const BoundQuery& q) : k_(q.k), n_(q.n_samples), beta_(q.beta) {
    log_fact_.resize(n_ + 1);
    log_fact_[0] = 0.0;
    for (long i = 1; i <= n_; ++i) log_fact_[i] = log_fact_[i - 1] + std::log(double(i));
  }

  // log of (beta/(N+1)) * sum_l exp(...); h(t) = expm1 of this.
  double log_sum(double t) const {
    const double log_t = std::log(t);
    const double log_lead = log_choose(n_, k_);
    double max_e = -std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (long l = k_; l <= n_; ++l) {
      const double e = log_choose(l, k_) - log_lead + double(l - n_) * log_t;
      if (e <= max_e) {
        acc += std::exp(e - max_e);
      } else {
        // New running maximum: rescale what we have onto the new shift.
        acc = acc * std::exp(max_e - e) + 1.0;
        max_e = e;
      }
    }
    return std::log(beta_) - std::log(double(n_ + 1)) + max_e + std::log(acc);
  }

  double value(double t) const { return std::expm1(log_sum(t)); }

 private:
  double log_choose(long n, long k) const { return log_fact_[n] - log_fact_[k] - log_fact_[n - k]; }

  long k_, n_;
  double beta_;
  std::vector<double> log_fact_;
};

double bisect(const StablePolynomial& poly) {
  double lo = kBracketLo, hi = kBracketHi;
  // log_sum > 0 <=> h > 0; cheaper and overflow-free compared to expm1.
  if (!(poly.log_sum(lo) > 0.0) || !(poly.log_sum(hi) < 0.0))
    throw Error("no-bracket", "scenario bound: polynomial does not change sign on (0, 1)");
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;  // interval at floating-point resolution
    if (poly.log_sum(mid) > 0.0) lo = mid;
    else hi = mid;
    // Return the point that actually met the residual target: near-zero roots
    // have steep slopes, where even half a bracket width of displacement
    // costs several orders of magnitude in the residual.
    if (hi - lo <= kWidthTol && std::fabs(poly.value(mid)) <= kResidualTol) return mid;
  }
  // Resolution or budget exhausted: the endpoint with the smaller magnitude.
  return std::fabs(poly.value(lo)) <= std::fabs(poly.value(hi)) ? lo : hi;
}

}  // namespace

double polynomial_value(const BoundQuery& query, double t) {
  validate(query);
  if (!(t > 0.0 && t < 1.0))
    throw InvalidQueryError("scenario bound: polynomial evaluation needs t in (0, 1)");
  if (query.k >= query.n_samples) {
    // Degenerate regime: the normalized equation reduces to beta/(k+1) - 1.
    return query.beta / double(query.k + 1) - 1.0;
  }
  return StablePolynomial(query).value(t);
}

double solve_t(const BoundQuery& query) {
  validate(query);
  if (query.k >= query.n_samples) return 0.0;
  return bisect(StablePolynomial(query));
}

double epsilon(const BoundQuery& query) { return 1.0 - solve_t(query); }

std::vector<double> epsilon_table(long n_samples, double beta) {
  validate(BoundQuery{0, n_samples, beta});
  std::vector<double> table(static_cast<std::size_t>(n_samples) + 1);
  parallel_for(n_samples + 1, [&](long k) {
    table[static_cast<std::size_t>(k)] = epsilon(BoundQuery{k, n_samples, beta});
  });
  return table;
}

Certificate certify(long k, long n_samples, double beta, CertificateKind kind) {
  const BoundQuery q{k, n_samples, beta};
  validate(q);
  Certificate cert;
  cert.k = k;
  cert.n_samples = n_samples;
  cert.beta = beta;
  cert.kind = kind;
  cert.t_value = solve_t(q);
  cert.epsilon = 1.0 - cert.t_value;
  cert.residual =
      (k >= n_samples) ? 0.0 : std::fabs(StablePolynomial(q).value(cert.t_value));
  return cert;
}

std::string kind_name(CertificateKind kind) {
  return kind == CertificateKind::a_priori ? "a-priori" : "a-posteriori";
}

}  // namespace svi::scenario_bounds
