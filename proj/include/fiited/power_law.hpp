#pragma once

#include <cstddef>
#include <vector>

namespace fiited {

/// Per-chunk prune ratios p_k = c * ((k + 0.5) / K)^exponent whose mean is `target_mean`.
///
/// Ratios above `clamp_max` are pinned there and c is refit over the remaining chunks so the
/// mean is preserved; this repeats until no new chunk exceeds the clamp. Throws
/// std::invalid_argument when the target is out of reach (target_mean > clamp_max) or the
/// arguments are out of domain.
std::vector<double> fit_power_law_ratios(std::size_t chunks, double exponent, double target_mean,
                                         double clamp_max = 0.95);

}  // namespace fiited
