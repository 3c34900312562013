#include "bnnp/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "bnnp/errors.hpp"
#include "bnnp/nn.hpp"

namespace bnnp {

using nlohmann::json;

std::string to_string(Task t) {
  switch (t) {
    case Task::pendulum: return "pendulum";
    case Task::decoy: return "decoy";
    case Task::fairness: return "fairness";
    case Task::clinical: return "clinical";
  }
  return "unknown";
}

Task parse_task(std::string_view s) {
  if (s == "pendulum") return Task::pendulum;
  if (s == "decoy") return Task::decoy;
  if (s == "fairness") return Task::fairness;
  if (s == "clinical") return Task::clinical;
  throw InvalidConfig("unknown task '" + std::string(s) + "'");
}

// ---- BitMatrix ----

BitMatrix::BitMatrix(Index rows, Index cols)
    : rows_(rows), cols_(cols), bits_(static_cast<std::size_t>(rows * cols), 0) {
  if (rows < 0 || cols < 0) throw InvalidShape("negative bit matrix size");
}

std::vector<int> BitMatrix::row_indices(Index r) const {
  std::vector<int> out;
  for (Index c = 0; c < cols_; ++c)
    if (get(r, c)) out.push_back(static_cast<int>(c));
  return out;
}

Index BitMatrix::count_row(Index r) const {
  Index n = 0;
  for (Index c = 0; c < cols_; ++c) n += get(r, c) ? 1 : 0;
  return n;
}

BitMatrix BitMatrix::select_rows(const std::vector<Index>& rows) const {
  if (empty()) return *this;
  BitMatrix out(static_cast<Index>(rows.size()), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Index c = 0; c < cols_; ++c) out.set(static_cast<Index>(i), c, get(rows[i], c));
  return out;
}

// ---- Dataset ----

std::vector<int> Dataset::labels() const {
  if (targets.cols() < 1) throw InvalidShape("dataset has no targets");
  std::vector<int> y(static_cast<std::size_t>(targets.rows()));
  for (Index i = 0; i < targets.rows(); ++i) y[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(targets(i, 0)));
  return y;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.task = task;
  out.meta = meta;
  out.features.resize(static_cast<Index>(rows.size()), features.cols());
  out.targets.resize(static_cast<Index>(rows.size()), targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= size()) throw InvalidShape("subset row out of range");
    out.features.row(static_cast<Index>(i)) = features.row(rows[i]);
    out.targets.row(static_cast<Index>(i)) = targets.row(rows[i]);
  }
  out.masks = masks.select_rows(rows);
  out.flags = flags.select_rows(rows);
  return out;
}

// ---- Standardizer ----

Standardizer Standardizer::fit(const RowMatrix& X, const std::vector<int>& passthrough) {
  if (X.rows() == 0) throw InvalidShape("cannot standardise an empty matrix");
  Standardizer s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().sum().transpose() / n;
  s.std.resize(X.cols());
  for (Index c = 0; c < X.cols(); ++c) {
    const double ss = (X.col(c).array() - s.mean[c]).square().sum();
    s.std[c] = std::max(std::sqrt(ss / n), 1e-8);
  }
  for (int c : passthrough) {
    if (c < 0 || c >= X.cols()) throw InvalidShape("passthrough column out of range");
    s.mean[c] = 0.0;
    s.std[c] = 1.0;
  }
  return s;
}

RowMatrix Standardizer::transform(const RowMatrix& X) const {
  if (X.cols() != mean.size()) throw InvalidShape("standardiser column count mismatch");
  RowMatrix Z(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i)
    for (Index c = 0; c < X.cols(); ++c) Z(i, c) = (X(i, c) - mean[c]) / std[c];
  return Z;
}

RowMatrix Standardizer::inverse(const RowMatrix& Z) const {
  if (Z.cols() != mean.size()) throw InvalidShape("standardiser column count mismatch");
  RowMatrix X(Z.rows(), Z.cols());
  for (Index i = 0; i < Z.rows(); ++i)
    for (Index c = 0; c < Z.cols(); ++c) X(i, c) = Z(i, c) * std[c] + mean[c];
  return X;
}

json Standardizer::to_json() const {
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"std", std::vector<double>(std.data(), std.data() + std.size())}};
}

Standardizer Standardizer::from_json(const json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("std").get<std::vector<double>>();
  if (m.size() != s.size()) throw FormatError("standardiser mean/std length mismatch");
  Standardizer out;
  out.mean = Eigen::Map<const Vector>(m.data(), static_cast<Index>(m.size()));
  out.std = Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size()));
  return out;
}

// ---- pendulum ----

json to_json(const PendulumConfig& c) {
  return {{"l1", c.l1}, {"l2", c.l2}, {"m1", c.m1}, {"m2", c.m2},  {"c1", c.c1},
          {"c2", c.c2}, {"g", c.g},   {"dt", c.dt}, {"steps_per_sample", c.steps_per_sample}};
}

PendulumConfig pendulum_config_from_json(const json& j) {
  PendulumConfig c;
  c.l1 = j.at("l1").get<double>();
  c.l2 = j.at("l2").get<double>();
  c.m1 = j.at("m1").get<double>();
  c.m2 = j.at("m2").get<double>();
  c.c1 = j.at("c1").get<double>();
  c.c2 = j.at("c2").get<double>();
  c.g = j.at("g").get<double>();
  c.dt = j.at("dt").get<double>();
  c.steps_per_sample = j.at("steps_per_sample").get<int>();
  c.validate();
  return c;
}

Dataset pendulum_dataset(const PendulumConfig& config, Index n_trajectories, Index traj_len, Rng& rng) {
  config.validate();
  if (n_trajectories < 1 || traj_len < 1) throw InvalidConfig("pendulum counts must be positive");
  Dataset d;
  d.task = Task::pendulum;
  d.features.resize(n_trajectories * traj_len, 4);
  d.targets.resize(n_trajectories * traj_len, 4);
  const double half_pi = std::numbers::pi / 2.0;
  Index row = 0;
  for (Index t = 0; t < n_trajectories; ++t) {
    PendulumState s{rng.uniform(-half_pi, half_pi), rng.uniform(-1.0, 1.0), rng.uniform(-half_pi, half_pi),
                    rng.uniform(-1.0, 1.0)};
    for (Index k = 0; k < traj_len; ++k, ++row) {
      d.features.row(row) = s.to_vector().transpose();
      for (int i = 0; i < config.steps_per_sample; ++i) s = pendulum_step(s, config);
      d.targets.row(row) = s.to_vector().transpose();
    }
  }
  d.meta["pendulum"] = to_json(config);
  return d;
}

// ---- decoy ----

void DecoyConfig::validate() const {
  if (patch_side < 1) throw InvalidConfig("patch_side must be positive");
  if (image_side < 2 * patch_side + 10) throw InvalidConfig("image too small for glyphs and corner patches");
  if (source == Source::idx_files &&
      (train_images.empty() || train_labels.empty() || test_images.empty() || test_labels.empty()))
    throw InvalidConfig("idx source needs all four file paths");
}

double decoy_train_shade(int label) { return (255.0 - 25.0 * label) / 255.0; }

RowMatrix render_glyphs(const DecoyConfig& config, const std::vector<int>& labels, Rng& rng) {
  config.validate();
  // Segments a..g: top, upper right, lower right, bottom, lower left, upper left, middle.
  static constexpr std::array<std::uint8_t, 10> kSegments = {
      0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
      0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111,
  };
  const int side = config.image_side;
  const int lo = config.patch_side;
  const int span = side - 2 * config.patch_side;  // usable square [lo, lo + span)
  RowMatrix images = RowMatrix::Zero(static_cast<Index>(labels.size()), side * side);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const int y = labels[n];
    if (y < 0 || y > 9) throw InvalidConfig("glyph labels must be in 0..9");
    const int width = std::min(span, 8 + static_cast<int>(rng.uniform_int(0, 3)));
    const int height = std::min(span, span - 6 + static_cast<int>(rng.uniform_int(0, 4)));
    const int x0 = lo + static_cast<int>(rng.uniform_int(0, span - width));
    const int y0 = lo + static_cast<int>(rng.uniform_int(0, span - height));
    const int t = 2;
    const int mid = height / 2;
    const double ink = rng.uniform(0.6, 1.0);
    auto paint = [&](int r0, int r1, int c0, int c1) {
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c)
          images(static_cast<Index>(n), (y0 + r) * side + (x0 + c)) = ink * rng.uniform(0.85, 1.0);
    };
    const auto seg = kSegments[static_cast<std::size_t>(y)];
    if (seg & 0b0000001) paint(0, t, 0, width);
    if (seg & 0b0000010) paint(0, mid + 1, width - t, width);
    if (seg & 0b0000100) paint(mid, height, width - t, width);
    if (seg & 0b0001000) paint(height - t, height, 0, width);
    if (seg & 0b0010000) paint(mid, height, 0, t);
    if (seg & 0b0100000) paint(0, mid + 1, 0, t);
    if (seg & 0b1000000) paint(mid - t / 2, mid - t / 2 + t, 0, width);
  }
  return images;
}

Dataset decoy_corrupt(const DecoyConfig& config, const RowMatrix& images, const std::vector<int>& labels,
                      bool train_shading, Rng& rng) {
  config.validate();
  const int side = config.image_side;
  const int p = config.patch_side;
  if (images.cols() != side * side) throw InvalidShape("image width does not match image_side");
  if (images.rows() != static_cast<Index>(labels.size())) throw InvalidShape("image and label counts differ");
  Dataset d;
  d.task = Task::decoy;
  d.features = images;
  d.targets.resize(images.rows(), 1);
  d.masks = BitMatrix(images.rows(), side * side);
  for (Index n = 0; n < images.rows(); ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    d.targets(n, 0) = y;
    const auto corner = rng.uniform_int(0, 3);
    const int r0 = (corner & 1) ? side - p : 0;
    const int c0 = (corner & 2) ? side - p : 0;
    const double shade =
        train_shading ? decoy_train_shade(y) : decoy_train_shade(static_cast<int>(rng.uniform_int(0, 9)));
    for (int r = r0; r < r0 + p; ++r)
      for (int c = c0; c < c0 + p; ++c) {
        d.features(n, r * side + c) = shade;
        d.masks.set(n, r * side + c, true);
      }
  }
  d.meta["image_side"] = side;
  d.meta["patch_side"] = p;
  d.meta["num_classes"] = 10;
  d.meta["shading"] = train_shading ? "label" : "random";
  return d;
}

namespace {

std::vector<int> random_labels(Index n, Rng& rng) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = static_cast<int>(rng.uniform_int(0, 9));
  return y;
}

std::pair<RowMatrix, std::vector<int>> idx_pair(const std::string& image_path, const std::string& label_path,
                                                Index limit, int side) {
  const IdxTensor images = load_idx(image_path);
  const IdxTensor labels = load_idx(label_path);
  if (!images.images || images.dims.size() != 3) throw FormatError(image_path + ": expected a 3-d image file");
  if (labels.images || labels.dims.size() != 1) throw FormatError(label_path + ": expected a 1-d label file");
  if (images.dims[1] != side || images.dims[2] != side)
    throw FormatError(image_path + ": image size does not match image_side");
  if (images.dims[0] != labels.dims[0]) throw FormatError("image and label files differ in count");
  const Index n = std::min<Index>(limit, images.dims[0]);
  RowMatrix X(n, side * side);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < side * side; ++j) X(i, j) = images.values[static_cast<std::size_t>(i * side * side + j)];
    y[static_cast<std::size_t>(i)] = static_cast<int>(labels.values[static_cast<std::size_t>(i)]);
  }
  return {std::move(X), std::move(y)};
}

}  // namespace

TrainTest decoy_dataset(const DecoyConfig& config, Index n_train, Index n_test, Rng& rng) {
  config.validate();
  if (n_train < 1 || n_test < 1) throw InvalidConfig("decoy counts must be positive");
  Rng glyph_rng = rng.split("glyphs");
  Rng patch_rng = rng.split("patches");
  if (config.source == DecoyConfig::Source::synthetic_glyphs) {
    const auto y_train = random_labels(n_train, rng);
    const auto y_test = random_labels(n_test, rng);
    const RowMatrix x_train = render_glyphs(config, y_train, glyph_rng);
    const RowMatrix x_test = render_glyphs(config, y_test, glyph_rng);
    return {decoy_corrupt(config, x_train, y_train, true, patch_rng),
            decoy_corrupt(config, x_test, y_test, false, patch_rng)};
  }
  auto [x_train, y_train] = idx_pair(config.train_images, config.train_labels, n_train, config.image_side);
  auto [x_test, y_test] = idx_pair(config.test_images, config.test_labels, n_test, config.image_side);
  return {decoy_corrupt(config, x_train, y_train, true, patch_rng),
          decoy_corrupt(config, x_test, y_test, false, patch_rng)};
}

IdxTensor parse_idx(std::string_view bytes) {
  auto need = [&](std::size_t offset, std::size_t count) {
    if (bytes.size() < offset + count)
      throw FormatError("idx: truncated at byte offset " + std::to_string(bytes.size()) + ", needed " +
                        std::to_string(offset + count));
  };
  auto be32 = [&](std::size_t offset) {
    need(offset, 4);
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes[offset + i]);
    return v;
  };
  const std::uint32_t magic = be32(0);
  IdxTensor t;
  if (magic == 0x00000801u) {
    t.dims.resize(1);
    t.images = false;
  } else if (magic == 0x00000803u) {
    t.dims.resize(3);
    t.images = true;
  } else {
    throw FormatError("idx: bad magic at byte offset 0");
  }
  std::size_t count = 1;
  for (std::size_t d = 0; d < t.dims.size(); ++d) {
    const std::uint32_t v = be32(4 + 4 * d);
    t.dims[d] = static_cast<int>(v);
    count *= v;
  }
  const std::size_t offset = 4 + 4 * t.dims.size();
  need(offset, count);
  if (bytes.size() != offset + count)
    throw FormatError("idx: " + std::to_string(bytes.size() - offset - count) + " trailing bytes at byte offset " +
                      std::to_string(offset + count));
  t.values.resize(count);
  const double scale = t.images ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < count; ++i) t.values[i] = static_cast<std::uint8_t>(bytes[offset + i]) * scale;
  return t;
}

IdxTensor load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_idx(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.detail());
  }
}

// ---- fairness ----

void FairnessConfig::validate() const {
  if (n_samples < 1) throw InvalidConfig("fairness n_samples must be positive");
  if (feature_dim < 2) throw InvalidConfig("fairness feature_dim must be at least 2");
  if (group_gap < -1.0 || group_gap > 1.0) throw InvalidConfig("fairness group_gap must be in [-1, 1]");
}

Dataset fairness_dataset(const FairnessConfig& config, Rng& rng) {
  config.validate();
  const int d = config.feature_dim;
  // Unit-norm weights keep the linear score near unit variance.
  Rng weight_rng = rng.split("weights");
  Vector beta = weight_rng.normal_vector(d - 1);
  beta /= beta.norm();
  const double offset = -0.5;
  Dataset out;
  out.task = Task::fairness;
  out.features.resize(config.n_samples, d);
  out.targets.resize(config.n_samples, 1);
  for (Index i = 0; i < config.n_samples; ++i) {
    const bool a = rng.bernoulli(0.5);
    out.features(i, kFairnessGroupColumn) = a ? 1.0 : 0.0;
    double score = offset;
    for (int j = 1; j < d; ++j) {
      const double f = rng.normal() + (a ? config.group_feature_shift : 0.0);
      out.features(i, j) = f;
      score += beta[j - 1] * f;
    }
    const double p = std::clamp(sigmoid(score) + (a ? config.group_gap : 0.0), 0.0, 1.0);
    out.targets(i, 0) = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  out.meta["group_index"] = kFairnessGroupColumn;
  return out;
}

// ---- clinical ----

void ClinicalConfig::validate() const {
  if (n_samples < 20) throw InvalidConfig("clinical n_samples must be at least 20");
  if (label_noise < 0.0 || label_noise > 1.0) throw InvalidConfig("label_noise must be in [0, 1]");
  for (double q : {creatinine_quantile, bun_quantile, urine_quantile})
    if (!(q > 0.0 && q < 1.0)) throw InvalidConfig("rule quantiles must be in (0, 1)");
  if (!std::isfinite(lactate_threshold) || !std::isfinite(bicarbonate_threshold))
    throw InvalidConfig("rule thresholds must be finite");
}

const std::vector<std::string>& clinical_feature_names() {
  static const std::vector<std::string> names = {"map", "age", "urine", "weight",
                                                 "creatinine", "lactate", "bicarbonate", "bun"};
  return names;
}

bool in_clinical_region(const ClinicalThresholds& t, const double* row) {
  const bool rule_a = row[kLactate] > t.lactate && row[kBicarbonate] < t.bicarbonate;
  const bool rule_b = row[kCreatinine] > t.creatinine && row[kBun] > t.bun && row[kUrine] < t.urine;
  return rule_a || rule_b;
}

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

json thresholds_json(const ClinicalThresholds& t) {
  return {{"lactate_index", static_cast<int>(kLactate)},
          {"bicarbonate_index", static_cast<int>(kBicarbonate)},
          {"creatinine_index", static_cast<int>(kCreatinine)},
          {"bun_index", static_cast<int>(kBun)},
          {"urine_index", static_cast<int>(kUrine)},
          {"lactate", t.lactate},
          {"bicarbonate", t.bicarbonate},
          {"creatinine", t.creatinine},
          {"bun", t.bun},
          {"urine", t.urine}};
}

}  // namespace

DatasetSplits clinical_dataset(const ClinicalConfig& config, Rng& rng) {
  config.validate();
  const Index n = config.n_samples;
  Dataset all;
  all.task = Task::clinical;
  all.features.resize(n, kClinicalColumns);
  all.targets.resize(n, 1);
  for (Index i = 0; i < n; ++i) {
    // Latent shock and renal severity drive the correlated measurements.
    const double shock = rng.normal();
    const double renal = rng.normal();
    auto row = all.features.row(i);
    row[kMap] = 80.0 - 8.0 * shock + 10.0 * rng.normal();
    row[kAge] = std::clamp(65.0 + 15.0 * rng.normal(), 18.0, 95.0);
    row[kUrine] = std::exp(std::log(60.0) - 0.5 * renal + 0.4 * rng.normal());
    row[kWeight] = std::max(40.0, 80.0 + 15.0 * rng.normal());
    row[kCreatinine] = std::exp(0.5 * renal + 0.3 * rng.normal());
    row[kLactate] = std::exp(std::log(1.5) + 0.4 * shock + 0.3 * rng.normal());
    row[kBicarbonate] = 24.0 - 2.0 * shock - 1.0 * renal + 2.0 * rng.normal();
    row[kBun] = std::exp(std::log(20.0) + 0.5 * renal + 0.3 * rng.normal());
  }
  ClinicalThresholds raw;
  raw.lactate = config.lactate_threshold;
  raw.bicarbonate = config.bicarbonate_threshold;
  auto column = [&](int c) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = all.features(i, c);
    return v;
  };
  raw.creatinine = quantile(column(kCreatinine), config.creatinine_quantile);
  raw.bun = quantile(column(kBun), config.bun_quantile);
  raw.urine = quantile(column(kUrine), config.urine_quantile);

  all.flags = BitMatrix(n, 1);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double* row = all.features.row(i).data();
    const bool region = in_clinical_region(raw, row);
    all.flags.set(i, 0, region);
    bool y;
    if (region) {
      y = !rng.bernoulli(config.label_noise);
    } else {
      const double score = 0.9 * (row[kLactate] - 1.5) - 0.04 * (row[kMap] - 80.0) + 0.03 * (row[kAge] - 65.0) +
                           0.6 * std::log(row[kCreatinine]) - 0.4;
      y = rng.bernoulli(sigmoid(score));
    }
    labels[static_cast<std::size_t>(i)] = y ? 1 : 0;
    all.targets(i, 0) = y ? 1.0 : 0.0;
  }

  DatasetSplits splits = split_dataset(all, labels, rng);
  const Standardizer st = Standardizer::fit(splits.train.features);
  ClinicalThresholds stdt;
  stdt.lactate = st.transform_value(kLactate, raw.lactate);
  stdt.bicarbonate = st.transform_value(kBicarbonate, raw.bicarbonate);
  stdt.creatinine = st.transform_value(kCreatinine, raw.creatinine);
  stdt.bun = st.transform_value(kBun, raw.bun);
  stdt.urine = st.transform_value(kUrine, raw.urine);
  for (Dataset* d : {&splits.train, &splits.val, &splits.test}) {
    d->features = st.transform(d->features);
    d->meta["standardizer"] = st.to_json();
    d->meta["region_raw"] = thresholds_json(raw);
    d->meta["region_std"] = thresholds_json(stdt);
    d->meta["feature_names"] = clinical_feature_names();
  }
  return splits;
}

// ---- split helpers ----

std::vector<Index> shuffled_indices(Index n, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  // Explicit Fisher-Yates so the order does not depend on the standard library.
  for (Index i = n - 1; i > 0; --i) std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  return idx;
}

std::vector<Index> stratified_order(const std::vector<int>& strata, Rng& rng) {
  std::vector<int> keys(strata);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  struct Slot {
    double pos;
    int stratum;
    Index row;
  };
  std::vector<Slot> slots;
  slots.reserve(strata.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    std::vector<Index> rows;
    for (std::size_t i = 0; i < strata.size(); ++i)
      if (strata[i] == keys[k]) rows.push_back(static_cast<Index>(i));
    const Index m = static_cast<Index>(rows.size());
    for (Index i = m - 1; i > 0; --i) std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    for (Index i = 0; i < m; ++i)
      slots.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(m), static_cast<int>(k),
                       rows[static_cast<std::size_t>(i)]});
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    return a.pos != b.pos ? a.pos < b.pos : a.stratum < b.stratum;
  });
  std::vector<Index> order;
  order.reserve(slots.size());
  for (const auto& s : slots) order.push_back(s.row);
  return order;
}

std::vector<std::vector<Index>> make_batches(const std::vector<Index>& order, Index batch_size) {
  if (batch_size < 1) throw InvalidConfig("batch_size must be positive");
  std::vector<std::vector<Index>> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

DatasetSplits split_dataset(const Dataset& all, const std::vector<int>& strata, Rng& rng) {
  if (static_cast<Index>(strata.size()) != all.size()) throw InvalidShape("strata length differs from rows");
  // Deal the stratified order round-robin over 20 slots: 14 train, 3 val, 3 test.
  const std::vector<Index> order = stratified_order(strata, rng);
  std::vector<Index> tr, va, te;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto slot = i % 20;
    (slot < 14 ? tr : slot < 17 ? va : te).push_back(order[i]);
  }
  std::sort(tr.begin(), tr.end());
  std::sort(va.begin(), va.end());
  std::sort(te.begin(), te.end());
  return {all.subset(tr), all.subset(va), all.subset(te)};
}

// ---- all tasks ----

DatasetSplits generate_task_data(const DataGenConfig& config, std::uint64_t seed) {
  Rng root(seed);
  switch (config.task) {
    case Task::pendulum: {
      Rng tr = root.split("pendulum/train"), va = root.split("pendulum/val"), te = root.split("pendulum/test");
      return {pendulum_dataset(config.pendulum, config.pendulum_train_trajectories, config.pendulum_traj_len, tr),
              pendulum_dataset(config.pendulum, config.pendulum_eval_trajectories, config.pendulum_traj_len, va),
              pendulum_dataset(config.pendulum, config.pendulum_eval_trajectories, config.pendulum_traj_len, te)};
    }
    case Task::decoy: {
      Rng main = root.split("decoy");
      TrainTest tt = decoy_dataset(config.decoy, config.decoy_train + config.decoy_val, config.decoy_test, main);
      // Validation rows are carved from the train-shaded split.
      std::vector<Index> tr, va;
      for (Index i = 0; i < tt.train.size(); ++i) (i < config.decoy_train ? tr : va).push_back(i);
      return {tt.train.subset(tr), tt.train.subset(va), std::move(tt.test)};
    }
    case Task::fairness: {
      Rng gen = root.split("fairness");
      Dataset all = fairness_dataset(config.fairness, gen);
      std::vector<int> strata = all.labels();
      for (Index i = 0; i < all.size(); ++i)
        strata[static_cast<std::size_t>(i)] += 2 * static_cast<int>(all.features(i, kFairnessGroupColumn));
      Rng split = root.split("fairness/split");
      DatasetSplits s = split_dataset(all, strata, split);
      const Standardizer st = Standardizer::fit(s.train.features, {kFairnessGroupColumn});
      for (Dataset* d : {&s.train, &s.val, &s.test}) {
        d->features = st.transform(d->features);
        d->meta["standardizer"] = st.to_json();
      }
      return s;
    }
    case Task::clinical: {
      Rng gen = root.split("clinical");
      return clinical_dataset(config.clinical, gen);
    }
  }
  throw InvalidConfig("unknown task");
}

}  // namespace bnnp
