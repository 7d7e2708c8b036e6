#include "agm/metrics.hpp"

#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "agm/objectives.hpp"

namespace agm {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels)
    : labels_(std::move(labels)),
      counts_(labels_.size(), std::vector<std::size_t>(labels_.size(), 0)) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels,
                                 std::vector<std::vector<std::size_t>> counts)
    : labels_(std::move(labels)), counts_(std::move(counts)) {
  if (counts_.size() != labels_.size())
    throw std::invalid_argument("confusion matrix: row count differs from label count");
  for (const auto& row : counts_)
    if (row.size() != labels_.size())
      throw std::invalid_argument("confusion matrix must be square");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::size_t count) {
  counts_.at(truth).at(predicted) += count;
}

std::size_t ConfusionMatrix::support(std::size_t truth) const {
  const auto& row = counts_.at(truth);
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (std::size_t c = 0; c < classes(); ++c) n += support(c);
  return n;
}

std::optional<double> ConfusionMatrix::recall(std::size_t cls) const {
  const std::size_t s = support(cls);
  if (s == 0) return std::nullopt;
  return static_cast<double>(counts_[cls][cls]) / static_cast<double>(s);
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  if (n == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t c = 0; c < classes(); ++c) hit += counts_[c][c];
  return static_cast<double>(hit) / static_cast<double>(n);
}

double ConfusionMatrix::uar() const {
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes(); ++c) {
    if (auto r = recall(c)) {
      sum += *r;
      ++used;
    }
  }
  return used ? sum / static_cast<double>(used) : 0.0;
}

std::vector<std::size_t> ConfusionMatrix::unsupported() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < classes(); ++c)
    if (support(c) == 0) out.push_back(c);
  return out;
}

std::string ConfusionMatrix::to_string() const {
  std::ostringstream os;
  for (std::size_t r = 0; r < classes(); ++r) {
    if (r) os << ';';
    for (std::size_t c = 0; c < classes(); ++c) {
      if (c) os << ' ';
      os << counts_[r][c];
    }
  }
  return os.str();
}

namespace {

template <std::size_t N>
std::vector<std::string> names(const std::array<std::string_view, N>& src) {
  return {src.begin(), src.end()};
}

std::optional<double> acc_of(const std::optional<ConfusionMatrix>& m) {
  return m ? std::optional(m->accuracy()) : std::nullopt;
}
std::optional<double> uar_of(const std::optional<ConfusionMatrix>& m) {
  return m ? std::optional(m->uar()) : std::nullopt;
}

void note_unsupported(const std::string& task, const ConfusionMatrix& m,
                      std::vector<std::string>& warnings) {
  for (auto c : m.unsupported())
    warnings.push_back(task + ": class '" + m.labels()[c] + "' has no samples; excluded from UAR");
}

}  // namespace

std::optional<double> EvalReport::gender_acc() const { return acc_of(gender); }
std::optional<double> EvalReport::gender_uar() const { return uar_of(gender); }
std::optional<double> EvalReport::age4_acc() const { return acc_of(age4); }
std::optional<double> EvalReport::age4_uar() const { return uar_of(age4); }
std::optional<double> EvalReport::combined7_acc() const { return acc_of(combined7); }
std::optional<double> EvalReport::combined7_uar() const { return uar_of(combined7); }

EvalReport evaluate(std::span<const Prediction> preds, std::span<const Truth> truths,
                    const AgeGroupBounds& bounds) {
  if (preds.empty()) throw std::invalid_argument("evaluate: no predictions");
  if (preds.size() != truths.size())
    throw std::invalid_argument("evaluate: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(truths.size()) + " ground-truth rows");
  EvalReport r;
  r.samples = preds.size();
  const bool has_age = preds.front().age_norm.has_value();
  const bool has_gender = preds.front().gender_scores.has_value();
  for (const auto& p : preds)
    if (p.age_norm.has_value() != has_age || p.gender_scores.has_value() != has_gender)
      throw std::invalid_argument("evaluate: predictions mix single-task and combined outputs");

  if (has_age) {
    std::vector<double> pred_years, true_years;
    ConfusionMatrix age4(names(kAgeGroupNames));
    double abs_err = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const double py = preds[i].age_years();
      pred_years.push_back(py);
      true_years.push_back(truths[i].age_years);
      abs_err += std::abs(py - truths[i].age_years);
      age4.add(static_cast<std::size_t>(map_age_to_group(truths[i].age_years, bounds)),
               static_cast<std::size_t>(map_age_to_group(py, bounds)));
    }
    r.mae_years = abs_err / static_cast<double>(preds.size());
    if (preds.size() >= 2) {
      r.ccc = agm::ccc(pred_years, true_years);
    } else {
      r.warnings.push_back("age: CCC needs at least 2 samples; omitted");
    }
    note_unsupported("age4", age4, r.warnings);
    r.age4 = std::move(age4);
  }

  if (has_gender) {
    ConfusionMatrix gm(names(kGenderNames));
    for (std::size_t i = 0; i < preds.size(); ++i)
      gm.add(static_cast<std::size_t>(truths[i].gender),
             static_cast<std::size_t>(preds[i].decided_gender()));
    note_unsupported("gender", gm, r.warnings);
    r.gender = std::move(gm);
  }

  if (has_age && has_gender) {
    ConfusionMatrix cm(names(kCombinedNames));
    std::size_t inconsistent = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto t = map_to_combined7(map_age_to_group(truths[i].age_years, bounds), truths[i].gender);
      const auto p = map_to_combined7(map_age_to_group(preds[i].age_years(), bounds),
                                      preds[i].decided_gender());
      if (t.inconsistent) ++inconsistent;
      cm.add(t.index, p.index);
    }
    if (inconsistent)
      r.warnings.push_back("combined7: " + std::to_string(inconsistent) +
                           " ground-truth rows label a non-child age as child; mapped to class child");
    note_unsupported("combined7", cm, r.warnings);
    r.combined7 = std::move(cm);
  }
  return r;
}

namespace {

struct Row {
  std::string task, metric;
  double value;
};

void matrix_rows(const std::string& task, const ConfusionMatrix& m, std::vector<Row>& rows) {
  rows.push_back({task, "acc", m.accuracy()});
  rows.push_back({task, "uar", m.uar()});
  for (std::size_t c = 0; c < m.classes(); ++c)
    if (auto rc = m.recall(c)) rows.push_back({task, "recall." + m.labels()[c], *rc});
  for (std::size_t t = 0; t < m.classes(); ++t)
    for (std::size_t p = 0; p < m.classes(); ++p)
      rows.push_back({task, "cm." + m.labels()[t] + "." + m.labels()[p],
                      static_cast<double>(m.count(t, p))});
}

std::vector<Row> report_rows(const EvalReport& r) {
  std::vector<Row> rows;
  rows.push_back({"all", "samples", static_cast<double>(r.samples)});
  if (r.mae_years) rows.push_back({"age", "mae_years", *r.mae_years});
  if (r.ccc) rows.push_back({"age", "ccc", *r.ccc});
  if (r.age4) matrix_rows("age4", *r.age4, rows);
  if (r.gender) matrix_rows("gender", *r.gender, rows);
  if (r.combined7) matrix_rows("combined7", *r.combined7, rows);
  for (const auto& [k, v] : r.extras) rows.push_back({"cost", k, v});
  return rows;
}

}  // namespace

std::string EvalReport::to_key_value() const {
  std::ostringstream os;
  os << "samples=" << samples << '\n';
  if (mae_years) os << "mae_years=" << format_number(*mae_years) << '\n';
  if (ccc) os << "ccc=" << format_number(*ccc) << '\n';
  auto task = [&os](const std::string& name, const std::optional<ConfusionMatrix>& m) {
    if (!m) return;
    os << name << "_acc=" << format_number(m->accuracy()) << '\n';
    os << name << "_uar=" << format_number(m->uar()) << '\n';
    for (std::size_t c = 0; c < m->classes(); ++c)
      if (auto rc = m->recall(c)) os << name << "_recall." << m->labels()[c] << '=' << format_number(*rc) << '\n';
    os << name << "_confusion=" << m->to_string() << '\n';
  };
  task("age4", age4);
  task("gender", gender);
  task("combined7", combined7);
  for (const auto& [k, v] : extras) os << k << '=' << format_number(v) << '\n';
  for (std::size_t i = 0; i < warnings.size(); ++i) os << "warning." << i << '=' << warnings[i] << '\n';
  return os.str();
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "task,metric,value\n";
  for (const auto& row : report_rows(*this))
    os << row.task << ',' << row.metric << ',' << format_number(row.value) << '\n';
  return os.str();
}

}  // namespace agm
