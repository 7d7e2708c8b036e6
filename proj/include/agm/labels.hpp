#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace agm {

/// Gender classes in output order. The integer codes are part of the
/// checkpoint and manifest contracts.
enum class Gender : std::uint8_t { child = 0, female = 1, male = 2 };
inline constexpr std::size_t kNumGenders = 3;
inline constexpr std::array<std::string_view, kNumGenders> kGenderNames{"child", "female", "male"};

std::string_view to_string(Gender g);
/// Accepts exactly "child", "female" or "male".
std::optional<Gender> parse_gender(std::string_view token);

enum class AgeGroup : std::uint8_t { child = 0, youth = 1, adult = 2, senior = 3 };
inline constexpr std::size_t kNumAgeGroups = 4;
inline constexpr std::array<std::string_view, kNumAgeGroups> kAgeGroupNames{"child", "youth",
                                                                           "adult", "senior"};
std::string_view to_string(AgeGroup g);

/// First year of each group after child. Defaults follow the four-class
/// challenge convention: child <= 14, youth 15-24, adult 25-54, senior 55+.
struct AgeGroupBounds {
  int youth_from = 15;
  int adult_from = 25;
  int senior_from = 55;
};

/// Rounds to whole years (half up) before applying the bounds. Throws on
/// negative or non-finite ages.
AgeGroup map_age_to_group(double age_years, const AgeGroupBounds& bounds = {});

inline constexpr std::size_t kNumCombinedClasses = 7;
inline constexpr std::array<std::string_view, kNumCombinedClasses> kCombinedNames{
    "child", "youth_female", "youth_male", "adult_female", "adult_male", "senior_female",
    "senior_male"};

struct CombinedClass {
  std::size_t index = 0;
  /// Set when gender says child but the age group does not.
  bool inconsistent = false;
};

/// 0 = child (any gender); 1..6 = {youth, adult, senior} x {female, male}.
CombinedClass map_to_combined7(AgeGroup group, Gender gender);

/// One utterance's model outputs. Either field is absent for a single-task
/// model that lacks the corresponding head.
struct Prediction {
  std::optional<double> age_norm;
  std::optional<std::array<double, kNumGenders>> gender_scores;

  /// argmax of gender_scores; ties go to the lowest index.
  Gender decided_gender() const;
  /// clamp(age_norm, 0, 1) * 100.
  double age_years() const;
};

}  // namespace agm
