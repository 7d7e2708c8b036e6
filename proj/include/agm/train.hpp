#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "agm/metrics.hpp"
#include "agm/model.hpp"
#include "agm/synth.hpp"

namespace agm {

enum class SelectionMetric { dev_combined, dev_ccc, dev_uar };

std::string_view to_string(SelectionMetric m);
std::optional<SelectionMetric> parse_selection_metric(std::string_view s);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  SelectionMetric selection_metric = SelectionMetric::dev_combined;
  /// Global gradient-norm clip; 0 disables it.
  double clip_grad_norm = 0.0;

  /// Throws ConfigError listing every violated constraint.
  void validate() const;
};

/// First and second ADAM moments, one pair per trainable parameter.
struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(std::string param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(std::move(param)) {}
  const std::string& parameter() const { return param_; }

 private:
  std::string param_;
};

/// One bias-corrected ADAM update from the gradients stored on the model's
/// trainable parameters. Frozen parameters are never touched. If any
/// gradient is non-finite nothing changes and NonFiniteGradient is thrown.
void adam_step(Model& model, AdamState& state, const TrainConfig& config);

/// A training/evaluation example with its conv features precomputed. The
/// conv stage is frozen, so caching the features is exact.
struct Example {
  Tensor features;
  double age_years = 0.0;
  Gender gender = Gender::female;
};

std::vector<Example> prepare_examples(const Model& model, std::span<const Utterance> utterances);

std::vector<Prediction> predict(const Model& model, std::span<const Example> examples);
EvalReport evaluate_model(const Model& model, std::span<const Example> examples);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> dev_mae_years;
  std::optional<double> dev_ccc;
  std::optional<double> dev_uar;
  double dev_score = 0.0;
  std::size_t rejected_steps = 0;
  bool selected = false;
};

struct TrainResult {
  Model best;
  std::size_t best_epoch = 0;
  double best_dev_score = 0.0;
  std::vector<EpochRecord> history;
  AdamState state;
};

/// Dev score for checkpoint selection. Falls back to the one available
/// task metric for single-task models.
double selection_score(const EvalReport& dev, SelectionMetric metric);

/// 1-based index of the highest score; the earliest epoch wins ties and
/// NaN scores never win. Throws on an empty list.
std::size_t select_epoch(std::span<const double> dev_scores);

/// Per epoch: seeded shuffle, batches of batch_size (a final partial batch
/// is kept when it has >= 2 examples), combined loss, backprop, ADAM, then
/// a dev evaluation. Returns the epoch with the highest dev score (earliest
/// wins ties).
TrainResult train(Model model, std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& config);

/// Loss of one batch in train mode (dropout active); gradients are left on
/// the model's parameters.
double batch_loss_and_grad(Model& model, std::span<const Example* const> batch, Rng& dropout_rng);

/// `epoch,train_loss,dev_mae_years,dev_ccc,dev_uar,selected` CSV with an
/// optional leading '#' provenance line.
std::string history_csv(std::span<const EpochRecord> history, const std::string& provenance = {});

}  // namespace agm
