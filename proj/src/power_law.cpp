#include "fiited/power_law.hpp"

#include <cmath>
#include <stdexcept>

namespace fiited {

std::vector<double> fit_power_law_ratios(std::size_t chunks, double exponent, double target_mean,
                                         double clamp_max) {
  if (chunks == 0) throw std::invalid_argument("power-law fit needs at least one chunk");
  if (!(exponent > 0.0)) throw std::invalid_argument("power-law exponent must be > 0");
  if (!(target_mean >= 0.0 && target_mean <= 1.0)) throw std::invalid_argument("target mean must be in [0, 1]");
  if (target_mean > clamp_max) {
    throw std::invalid_argument("target mean unreachable: exceeds the per-chunk clamp even with every chunk clamped");
  }

  const auto k_count = static_cast<double>(chunks);
  std::vector<double> basis(chunks);
  for (std::size_t k = 0; k < chunks; ++k) basis[k] = std::pow((static_cast<double>(k) + 0.5) / k_count, exponent);

  std::vector<double> ratios(chunks, 0.0);
  std::vector<bool> clamped(chunks, false);
  std::size_t n_clamped = 0;
  while (true) {
    const double remaining = target_mean * k_count - static_cast<double>(n_clamped) * clamp_max;
    double basis_sum = 0.0;
    for (std::size_t k = 0; k < chunks; ++k) {
      if (!clamped[k]) basis_sum += basis[k];
    }
    if (n_clamped == chunks) break;
    const double c = remaining / basis_sum;
    bool changed = false;
    for (std::size_t k = 0; k < chunks; ++k) {
      if (clamped[k]) continue;
      ratios[k] = c * basis[k];
      if (ratios[k] > clamp_max) {
        ratios[k] = clamp_max;
        clamped[k] = true;
        ++n_clamped;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (double& p : ratios) {
    if (p < 0.0) p = 0.0;
  }
  return ratios;
}

}  // namespace fiited
