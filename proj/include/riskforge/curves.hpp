#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "riskforge/trainer.hpp"

namespace riskforge {

enum class CurveKind { ProcessWeight, TrainingReport };

// Accepts process-weight and training-report. Throws UnknownCurve.
CurveKind curve_from_string(std::string_view s);

struct CurveParams {
  double gamma = 1.0;
  double delta = 4.0;
};

// The five reference shapes: gamma = 1, then (gamma, delta) = (0.4, 4),
// (0.7, 4), (0.7, 1) and (0.7, 7).
const std::vector<CurveParams>& reference_curves();

// Columns i, position = (i-1)/(n-1), one theta column per curve and the
// config hash. Throws std::invalid_argument for n < 2.
std::string process_weight_csv(std::size_t n, const std::vector<CurveParams>& curves,
                               bool normalize_endpoints, const std::string& config_hash);

// Columns iteration, epoch, stage, mean_reward, mean_kl, objective and the
// config hash.
std::string training_curve_csv(const TrainingReport& r, const std::string& config_hash);

}  // namespace riskforge
