#include "bnnp/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bnnp/errors.hpp"
#include "bnnp/kernels.hpp"

namespace bnnp {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size()) throw InvalidShape("prediction and label counts differ");
  if (preds.empty()) throw InvalidShape("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw InvalidShape("score and label counts differ");
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw InvalidShape("auroc labels must be 0 or 1");
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DegenerateLabels("auroc needs both classes");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based mid-ranks of the positives; exact in half-integers.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum += mid;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

double l1_loss(const RowMatrix& preds, const RowMatrix& targets) {
  if (preds.rows() != targets.rows() || preds.cols() != targets.cols())
    throw InvalidShape("prediction and target shapes differ");
  if (preds.size() == 0) throw InvalidShape("l1 loss of an empty set");
  double s = 0.0;
  for (Index i = 0; i < preds.rows(); ++i)
    for (Index j = 0; j < preds.cols(); ++j) s += std::abs(preds(i, j) - targets(i, j));
  return s / static_cast<double>(preds.size());
}

std::string to_string(PhiMode m) { return m == PhiMode::averaged_predictor ? "averaged_predictor" : "per_sample"; }

double mean_phi(const DomainLoss& loss, const Ensemble& e, const Dataset& data, PhiMode mode) {
  e.validate();
  if (data.size() == 0) throw InvalidShape("empty evaluation set");
  if (mode == PhiMode::averaged_predictor || e.members.size() == 1) return loss.ensemble_value(e, data);
  double s = 0.0;
  for (const auto& w : e.members) s += loss.evaluate_all(w, data, Reduction::mean, nullptr);
  return s / static_cast<double>(e.members.size());
}

ParetoResult pareto_points(const std::vector<ParetoPoint>& samples) {
  if (samples.empty()) throw InvalidShape("pareto of an empty set");
  ParetoResult r;
  r.points = samples;
  r.on_frontier.assign(samples.size(), true);
  // Sort by accuracy descending, phi ascending; a point is dominated iff some
  // earlier point has phi strictly lower, or equal phi and strictly higher accuracy.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (samples[a].accuracy != samples[b].accuracy) return samples[a].accuracy > samples[b].accuracy;
    return samples[a].phi < samples[b].phi;
  });
  double best_phi = INFINITY;
  double best_acc = -INFINITY;  // accuracy of the point achieving best_phi
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& p = samples[order[k]];
    const bool dominated = p.phi > best_phi || (p.phi == best_phi && p.accuracy < best_acc);
    r.on_frontier[order[k]] = !dominated;
    if (p.phi < best_phi || (p.phi == best_phi && p.accuracy > best_acc)) {
      best_phi = p.phi;
      best_acc = p.accuracy;
    }
  }
  return r;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  s.n = static_cast<Index>(values.size());
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(values.size() - 1)) / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

RowMatrix ensemble_predictions(const Ensemble& e, const Dataset& data) {
  e.validate();
  RowMatrix out(data.size(), e.arch.output_dim());
  kernels::for_each_index(data.size(), [&](Index i) {
    out.row(i) = ensemble_predict(e, data.features.row(i).transpose()).transpose();
  });
  return out;
}

namespace {

std::vector<int> class_predictions(OutputHead head, const RowMatrix& probs) {
  std::vector<int> p(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i)
    p[static_cast<std::size_t>(i)] =
        head == OutputHead::softmax ? argmax_first(probs.row(i).transpose()) : (probs(i, 0) >= 0.5 ? 1 : 0);
  return p;
}

}  // namespace

TaskMetrics evaluate_task(const Ensemble& e, const Dataset& data, const DomainLoss& loss, PhiMode mode) {
  if (data.size() == 0) throw InvalidShape("empty evaluation set");
  TaskMetrics m;
  const RowMatrix pred = ensemble_predictions(e, data);
  if (e.arch.head == OutputHead::identity) {
    m.primary_name = "l1";
    m.primary = l1_loss(pred, data.targets);
    m.accuracy = NAN;
  } else {
    m.accuracy = accuracy(class_predictions(e.arch.head, pred), data.labels());
    if (data.task == Task::clinical) {
      m.primary_name = "auroc";
      std::vector<double> scores(static_cast<std::size_t>(pred.rows()));
      for (Index i = 0; i < pred.rows(); ++i) scores[static_cast<std::size_t>(i)] = pred(i, 0);
      try {
        m.primary = auroc(scores, data.labels());
      } catch (const DegenerateLabels&) {
        m.primary = NAN;
      }
    } else {
      m.primary_name = "accuracy";
      m.primary = m.accuracy;
    }
  }
  m.phi = mean_phi(loss, e, data, mode);
  return m;
}

double member_score(const Mlp& net, const ParamVector& w, const Dataset& data) {
  const RowMatrix out = kernels::forward_rows(net, w, data.features);
  if (net.arch().head == OutputHead::identity) return -l1_loss(out, data.targets);
  RowMatrix probs(out.rows(), out.cols());
  for (Index i = 0; i < out.rows(); ++i) probs.row(i) = apply_head(net.arch().head, out.row(i).transpose()).transpose();
  return accuracy(class_predictions(net.arch().head, probs), data.labels());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "task,method,seed,metric,value\n";
  for (const auto& r : rows)
    os << r.task << ',' << r.method << ',' << r.seed << ',' << r.metric << ',' << format_double(r.value) << '\n';
  return os.str();
}

std::string pareto_csv(const std::vector<ParetoRow>& rows) {
  std::ostringstream os;
  os << "source_prior,sample_id,accuracy,phi,on_frontier\n";
  for (const auto& r : rows)
    os << r.source_prior << ',' << r.sample_id << ',' << format_double(r.accuracy) << ',' << format_double(r.phi)
       << ',' << (r.on_frontier ? 1 : 0) << '\n';
  return os.str();
}

}  // namespace bnnp
