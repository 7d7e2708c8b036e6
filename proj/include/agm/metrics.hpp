#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agm/labels.hpp"

namespace agm {

/// Square count matrix indexed [true][predicted].
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::vector<std::string> labels);
  ConfusionMatrix(std::vector<std::string> labels, std::vector<std::vector<std::size_t>> counts);

  void add(std::size_t truth, std::size_t predicted, std::size_t count = 1);

  std::size_t classes() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t count(std::size_t truth, std::size_t predicted) const {
    return counts_.at(truth).at(predicted);
  }
  std::size_t support(std::size_t truth) const;
  std::size_t total() const;

  /// Recall of one class; empty when the class has no support.
  std::optional<double> recall(std::size_t cls) const;
  double accuracy() const;
  /// Unweighted mean of recalls over classes with nonzero support.
  double uar() const;
  /// Classes left out of uar() for lack of support.
  std::vector<std::size_t> unsupported() const;

  /// Rows separated by ';', cells by ' '.
  std::string to_string() const;

 private:
  std::vector<std::string> labels_;
  std::vector<std::vector<std::size_t>> counts_;
};

struct Truth {
  double age_years = 0.0;
  Gender gender = Gender::child;
};

/// Metrics for one split. Age fields are present when the predictions
/// carry ages, gender fields when they carry gender scores, combined-7
/// fields when they carry both.
struct EvalReport {
  std::size_t samples = 0;

  std::optional<double> mae_years;
  std::optional<double> ccc;
  std::optional<ConfusionMatrix> age4;
  std::optional<ConfusionMatrix> gender;
  std::optional<ConfusionMatrix> combined7;

  /// Extra numeric fields appended verbatim (e.g. parameter and MAC counts).
  std::map<std::string, double> extras;
  std::vector<std::string> warnings;

  std::optional<double> gender_acc() const;
  std::optional<double> gender_uar() const;
  std::optional<double> age4_acc() const;
  std::optional<double> age4_uar() const;
  std::optional<double> combined7_acc() const;
  std::optional<double> combined7_uar() const;

  /// Flat `key=value` lines, fixed key order.
  std::string to_key_value() const;
  /// `task,metric,value` rows, one per task metric.
  std::string to_csv() const;
};

/// Scores aligned predictions against ground truth. Throws on empty or
/// misaligned input.
EvalReport evaluate(std::span<const Prediction> preds, std::span<const Truth> truths,
                    const AgeGroupBounds& bounds = {});

/// Shortest round-trippable decimal text for a double; used by every
/// report writer so outputs are byte-stable.
std::string format_number(double v);

}  // namespace agm
