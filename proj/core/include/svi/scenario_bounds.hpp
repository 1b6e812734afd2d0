#pragma once

#include <string>
#include <vector>

namespace svi::scenario_bounds {

// Violation-level query: k support constraints observed (or assumed a priori)
// out of n_samples scenarios, at confidence parameter beta in (0, 1).
struct BoundQuery {
  long k = 0;
  long n_samples = 0;
  double beta = 0.0;
};

enum class CertificateKind { a_priori, a_posteriori };

struct Certificate {
  long k = 0;
  long n_samples = 0;
  double beta = 0.0;
  double t_value = 0.0;   // unique root in (0, 1), or 0 when k >= n_samples
  double epsilon = 0.0;   // 1 - t_value
  double residual = 0.0;  // |stable polynomial value| at t_value
  CertificateKind kind = CertificateKind::a_posteriori;
};

// Bisection controls for the polynomial root (see scenario_bounds.cpp for the
// normalized form these apply to).
inline constexpr double kBracketLo = 1e-15;
inline constexpr double kBracketHi = 1.0 - 1e-15;
inline constexpr double kWidthTol = 1e-12;
inline constexpr double kResidualTol = 1e-10;

// Numerically stable value of the violation polynomial at t: the defining
// equation divided through by its leading term, evaluated in log space.
// Strictly decreasing on (0, 1) with exactly one sign change when k < N.
double polynomial_value(const BoundQuery& query, double t);

// Unique root t(k) in (0, 1) for k < n_samples; 0 for k >= n_samples.
double solve_t(const BoundQuery& query);

// epsilon(k) = 1 - t(k).
double epsilon(const BoundQuery& query);

// epsilon(k) for every k in 0..n_samples (inclusive); nondecreasing in k.
std::vector<double> epsilon_table(long n_samples, double beta);

Certificate certify(long k, long n_samples, double beta,
                    CertificateKind kind = CertificateKind::a_posteriori);

std::string kind_name(CertificateKind kind);

}  // namespace svi::scenario_bounds
