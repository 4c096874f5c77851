#include "riskforge/curves.hpp"

#include <stdexcept>

#include "riskforge/errors.hpp"
#include "riskforge/text.hpp"

namespace riskforge {

CurveKind curve_from_string(std::string_view s) {
  if (s == "process-weight") return CurveKind::ProcessWeight;
  if (s == "training-report") return CurveKind::TrainingReport;
  throw UnknownCurve(std::string(s));
}

const std::vector<CurveParams>& reference_curves() {
  static const std::vector<CurveParams> curves{
      {1.0, 4.0}, {0.4, 4.0}, {0.7, 4.0}, {0.7, 1.0}, {0.7, 7.0}};
  return curves;
}

std::string process_weight_csv(std::size_t n, const std::vector<CurveParams>& curves,
                               bool normalize_endpoints, const std::string& config_hash) {
  if (n < 2) throw std::invalid_argument("curve needs n >= 2");
  std::string out = "i,position";
  for (const auto& c : curves) {
    out += ",gamma=" + text::format_double(c.gamma) + " delta=" + text::format_double(c.delta);
  }
  out += ",config_hash\n";
  const auto steps = static_cast<std::int64_t>(n);
  for (std::int64_t i = 1; i <= steps; ++i) {
    out += std::to_string(i) + "," +
           text::format_double(static_cast<double>(i - 1) / static_cast<double>(steps - 1));
    for (const auto& c : curves) {
      out += "," + text::format_double(process_weight(i, steps, c.gamma, c.delta, normalize_endpoints));
    }
    out += "," + config_hash + "\n";
  }
  return out;
}

std::string training_curve_csv(const TrainingReport& r, const std::string& config_hash) {
  std::string out = "iteration,epoch,stage,mean_reward,mean_kl,objective,config_hash\n";
  for (const auto& it : r.iterations) {
    out += std::to_string(it.iteration) + "," + std::to_string(it.epoch) + "," +
           std::string(to_string(it.stage)) + "," + text::format_double(it.mean_reward) + "," +
           text::format_double(it.mean_kl) + "," + text::format_double(it.objective) + "," +
           config_hash + "\n";
  }
  return out;
}

}  // namespace riskforge
