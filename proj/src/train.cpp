#include "agm/train.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "agm/errors.hpp"
#include "agm/objectives.hpp"
#include "agm/rng.hpp"

namespace agm {

std::string_view to_string(SelectionMetric m) {
  switch (m) {
    case SelectionMetric::dev_combined: return "dev_combined";
    case SelectionMetric::dev_ccc: return "dev_ccc";
    case SelectionMetric::dev_uar: return "dev_uar";
  }
  return "?";
}

std::optional<SelectionMetric> parse_selection_metric(std::string_view s) {
  for (auto m : {SelectionMetric::dev_combined, SelectionMetric::dev_ccc, SelectionMetric::dev_uar})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

void TrainConfig::validate() const {
  std::vector<std::string> issues;
  if (!(learning_rate > 0.0)) issues.push_back("train.learning_rate must be > 0");
  if (epochs < 1) issues.push_back("train.epochs must be >= 1");
  if (batch_size < 2) issues.push_back("train.batch_size must be >= 2 (CCC needs two samples)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) issues.push_back("train.adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) issues.push_back("train.adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) issues.push_back("train.adam_eps must be > 0");
  if (!(clip_grad_norm >= 0.0)) issues.push_back("train.clip_grad_norm must be >= 0");
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

void adam_step(Model& model, AdamState& state, const TrainConfig& config) {
  for (const auto& p : model.parameters()) {
    if (!p.trainable || p.grad.empty()) continue;
    if (!p.grad.all_finite()) throw NonFiniteGradient(p.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (auto& p : model.parameters()) {
    if (!p.trainable) continue;
    auto [mit, m_fresh] = state.first_moment.try_emplace(p.name, p.value.shape(), 0.0);
    auto [vit, v_fresh] = state.second_moment.try_emplace(p.name, p.value.shape(), 0.0);
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    const bool has_grad = !p.grad.empty();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = has_grad ? p.grad[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

std::vector<Example> prepare_examples(const Model& model, std::span<const Utterance> utterances) {
  std::vector<Example> out;
  out.reserve(utterances.size());
  for (const auto& u : utterances)
    out.push_back({extract_features(model, u.waveform), static_cast<double>(u.record.age_years),
                   u.record.gender});
  return out;
}

std::vector<Prediction> predict(const Model& model, std::span<const Example> examples) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(forward_features(model, e.features));
  return out;
}

EvalReport evaluate_model(const Model& model, std::span<const Example> examples) {
  const auto preds = predict(model, examples);
  std::vector<Truth> truths;
  truths.reserve(examples.size());
  for (const auto& e : examples) truths.push_back({e.age_years, e.gender});
  return evaluate(preds, truths);
}

double selection_score(const EvalReport& dev, SelectionMetric metric) {
  const bool age = dev.ccc.has_value();
  const bool gender = dev.gender.has_value();
  switch (metric) {
    case SelectionMetric::dev_combined:
      if (age && gender) return 0.5 * (*dev.ccc + *dev.gender_uar());
      if (age) return *dev.ccc;
      if (gender) return *dev.gender_uar();
      break;
    case SelectionMetric::dev_ccc:
      if (age) return *dev.ccc;
      break;
    case SelectionMetric::dev_uar:
      if (gender) return *dev.gender_uar();
      break;
  }
  throw std::invalid_argument("selection metric " + std::string(to_string(metric)) +
                              " is not available for this model's heads");
}

double batch_loss_and_grad(Model& model, std::span<const Example* const> batch, Rng& dropout_rng) {
  Graph g;
  std::vector<Var> pooled;
  pooled.reserve(batch.size());
  for (const Example* e : batch) pooled.push_back(encode(g, model, e->features));
  Var rows = stack_rows(pooled);
  HeadOutputs out = apply_heads(g, model, rows, Mode::train, &dropout_rng);
  std::optional<Var> age_loss, gender_loss;
  if (out.age) {
    std::vector<double> target;
    for (const Example* e : batch) target.push_back(e->age_years / 100.0);
    age_loss = ccc_loss(*out.age, target);
  }
  if (out.gender) {
    std::vector<Gender> labels;
    for (const Example* e : batch) labels.push_back(e->gender);
    gender_loss = ce_loss(*out.gender, labels);
  }
  Var loss = age_loss && gender_loss ? combined_loss(*age_loss, *gender_loss)
                                     : (age_loss ? *age_loss : *gender_loss);
  g.backward(loss);
  return loss.value()[0];
}

namespace {

void clip_gradients(Model& model, double max_norm) {
  double sq = 0.0;
  for (const auto& p : model.parameters())
    if (p.trainable && !p.grad.empty())
      for (double v : p.grad.values()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const double f = max_norm / norm;
  for (auto& p : model.parameters())
    if (p.trainable && !p.grad.empty())
      for (double& v : p.grad.values()) v *= f;
}

}  // namespace

std::size_t select_epoch(std::span<const double> dev_scores) {
  if (dev_scores.empty()) throw std::invalid_argument("select_epoch: no epochs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dev_scores.size(); ++i)
    if (dev_scores[i] > dev_scores[best] || (std::isnan(dev_scores[best]) && !std::isnan(dev_scores[i]))) best = i;
  return best + 1;
}

TrainResult train(Model model, std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.size() < 2) throw std::invalid_argument("train: the training set needs at least 2 examples");
  if (dev_set.empty()) throw std::invalid_argument("train: the development set is empty");
  {
    // Fail before any work if the metric cannot be computed for these heads.
    EvalReport probe;
    if (model.config().age_head) probe.ccc = 0.0;
    if (model.config().gender_head) probe.gender = ConfusionMatrix({"x"});
    selection_score(probe, config.selection_metric);
  }
  Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.best_dev_score = -std::numeric_limits<double>::infinity();
  AdamState state;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      if (end - begin < 2) continue;
      std::vector<const Example*> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set[order[i]]);
      model.zero_grad();
      const double loss = batch_loss_and_grad(model, batch, dropout_rng);
      if (!std::isfinite(loss)) {
        ++rec.rejected_steps;
        std::clog << "train: epoch " << epoch << ": non-finite loss, step skipped\n";
        continue;
      }
      if (config.clip_grad_norm > 0.0) clip_gradients(model, config.clip_grad_norm);
      try {
        adam_step(model, state, config);
      } catch (const NonFiniteGradient& e) {
        ++rec.rejected_steps;
        std::clog << "train: epoch " << epoch << ": " << e.what() << ", step skipped\n";
        continue;
      }
      loss_sum += loss;
      ++used;
    }
    model.zero_grad();
    if (used == 0)
      throw std::runtime_error("train: every step of epoch " + std::to_string(epoch) +
                               " produced a non-finite loss or gradient");
    rec.train_loss = loss_sum / static_cast<double>(used);
    const EvalReport dev = evaluate_model(model, dev_set);
    rec.dev_mae_years = dev.mae_years;
    rec.dev_ccc = dev.ccc;
    rec.dev_uar = dev.gender_uar();
    rec.dev_score = selection_score(dev, config.selection_metric);
    if (result.best_epoch == 0 || rec.dev_score > result.best_dev_score ||
        (std::isnan(result.best_dev_score) && !std::isnan(rec.dev_score))) {
      result.best_dev_score = rec.dev_score;
      result.best_epoch = epoch;
      result.best = model;
    }
    result.history.push_back(rec);
  }
  for (auto& r : result.history) r.selected = r.epoch == result.best_epoch;
  result.state = std::move(state);
  return result;
}

std::string history_csv(std::span<const EpochRecord> history, const std::string& provenance) {
  std::ostringstream os;
  if (!provenance.empty()) os << "# " << provenance << '\n';
  os << "epoch,train_loss,dev_mae_years,dev_ccc,dev_uar,selected\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  for (const auto& r : history)
    os << r.epoch << ',' << format_number(r.train_loss) << ',' << opt(r.dev_mae_years) << ','
       << opt(r.dev_ccc) << ',' << opt(r.dev_uar) << ',' << (r.selected ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace agm
