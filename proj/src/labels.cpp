#include "agm/labels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace agm {

std::string_view to_string(Gender g) { return kGenderNames.at(static_cast<std::size_t>(g)); }

std::optional<Gender> parse_gender(std::string_view token) {
  for (std::size_t i = 0; i < kNumGenders; ++i)
    if (kGenderNames[i] == token) return static_cast<Gender>(i);
  return std::nullopt;
}

std::string_view to_string(AgeGroup g) { return kAgeGroupNames.at(static_cast<std::size_t>(g)); }

AgeGroup map_age_to_group(double age_years, const AgeGroupBounds& bounds) {
  if (!std::isfinite(age_years) || age_years < 0.0)
    throw std::invalid_argument("map_age_to_group: age must be a non-negative number, got " +
                                std::to_string(age_years));
  const auto years = static_cast<long>(std::floor(age_years + 0.5));
  if (years >= bounds.senior_from) return AgeGroup::senior;
  if (years >= bounds.adult_from) return AgeGroup::adult;
  if (years >= bounds.youth_from) return AgeGroup::youth;
  return AgeGroup::child;
}

CombinedClass map_to_combined7(AgeGroup group, Gender gender) {
  if (group == AgeGroup::child) return {0, false};
  if (gender == Gender::child) return {0, true};
  const std::size_t base = 1 + 2 * (static_cast<std::size_t>(group) - 1);
  return {base + (gender == Gender::male ? 1 : 0), false};
}

Gender Prediction::decided_gender() const {
  if (!gender_scores) throw std::logic_error("prediction carries no gender scores");
  const auto& s = *gender_scores;
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] > s[best]) best = i;
  return static_cast<Gender>(best);
}

double Prediction::age_years() const {
  if (!age_norm) throw std::logic_error("prediction carries no age");
  return std::clamp(*age_norm, 0.0, 1.0) * 100.0;
}

}  // namespace agm
