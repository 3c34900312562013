#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bnnp/pendulum.hpp"
#include "bnnp/rng.hpp"
#include "bnnp/types.hpp"

namespace bnnp {

enum class Task { pendulum, decoy, fairness, clinical };

std::string to_string(Task t);
Task parse_task(std::string_view s);

// Dense boolean matrix. Stored one byte per bit in memory; packed on disk.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(Index rows, Index cols);

  Index rows() const noexcept { return rows_; }
  Index cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

  bool get(Index r, Index c) const { return bits_[static_cast<std::size_t>(r * cols_ + c)] != 0; }
  void set(Index r, Index c, bool v) { bits_[static_cast<std::size_t>(r * cols_ + c)] = v ? 1 : 0; }

  // Columns set in row r, ascending.
  std::vector<int> row_indices(Index r) const;
  Index count_row(Index r) const;
  BitMatrix select_rows(const std::vector<Index>& rows) const;

  bool operator==(const BitMatrix&) const = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// One split of one task. Classification targets hold the class index (or the
// 0/1 label) in column 0.
struct Dataset {
  Task task = Task::pendulum;
  RowMatrix features;
  RowMatrix targets;
  BitMatrix masks;  // decoy: background pixels per row
  BitMatrix flags;  // clinical: column 0 is rule-region membership
  nlohmann::json meta = nlohmann::json::object();

  Index size() const noexcept { return features.rows(); }
  std::vector<int> labels() const;
  Dataset subset(const std::vector<Index>& rows) const;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Per-column affine standardisation fitted on one matrix.
struct Standardizer {
  Vector mean;
  Vector std;

  // Two-pass mean and population std; std floored at 1e-8. Columns listed in
  // `passthrough` keep mean 0 and std 1.
  static Standardizer fit(const RowMatrix& X, const std::vector<int>& passthrough = {});
  RowMatrix transform(const RowMatrix& X) const;
  RowMatrix inverse(const RowMatrix& Z) const;
  double transform_value(Index col, double v) const { return (v - mean[col]) / std[col]; }

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

// ---- pendulum ----

nlohmann::json to_json(const PendulumConfig& c);
PendulumConfig pendulum_config_from_json(const nlohmann::json& j);

// n_trajectories * traj_len consecutive (state, state after steps_per_sample
// steps) pairs. Initial angles ~ U(-pi/2, pi/2), angular velocities ~ U(-1, 1).
Dataset pendulum_dataset(const PendulumConfig& config, Index n_trajectories, Index traj_len, Rng& rng);

// ---- decoy images ----

struct DecoyConfig {
  int image_side = 28;
  int patch_side = 4;
  enum class Source { synthetic_glyphs, idx_files } source = Source::synthetic_glyphs;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  void validate() const;
};

// Shade in [0, 1] of the training patch for class y.
double decoy_train_shade(int label);

// Procedurally rendered seven-segment digits, confined to the square
// [patch_side, image_side - patch_side - 1] so they never touch a corner patch.
RowMatrix render_glyphs(const DecoyConfig& config, const std::vector<int>& labels, Rng& rng);

// Stamps a patch into a seeded corner of every image. With train_shading the
// shade is decoy_train_shade(label); otherwise it is drawn independently of
// the label. Masks mark the patch pixels.
Dataset decoy_corrupt(const DecoyConfig& config, const RowMatrix& images, const std::vector<int>& labels,
                      bool train_shading, Rng& rng);

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Synthetic glyphs or IDX files per config.source.
TrainTest decoy_dataset(const DecoyConfig& config, Index n_train, Index n_test, Rng& rng);

// IDX tensor: unsigned-byte payload. Image files (magic 0x803) are rescaled to
// [0, 1]; label files (0x801) keep raw values.
struct IdxTensor {
  std::vector<int> dims;
  std::vector<double> values;
  bool images = false;
};

IdxTensor parse_idx(std::string_view bytes);
IdxTensor load_idx(const std::string& path);

// ---- tabular ----

struct FairnessConfig {
  Index n_samples = 4000;
  int feature_dim = 10;  // including the group column
  double group_gap = 0.3;          // added to P(y = 1) for group a
  double group_feature_shift = 0.5;  // added to every non-group feature for group a

  void validate() const;
};

// Column 0 holds the group (1 = a, 0 = b); the remaining columns are features.
Dataset fairness_dataset(const FairnessConfig& config, Rng& rng);

inline constexpr int kFairnessGroupColumn = 0;

struct ClinicalConfig {
  Index n_samples = 4000;
  double label_noise = 0.05;
  double lactate_threshold = 2.2;      // mmol/L
  double bicarbonate_threshold = 22.0;  // mmol/L
  double creatinine_quantile = 0.8;
  double bun_quantile = 0.8;
  double urine_quantile = 0.2;

  void validate() const;
};

// Column order of the clinical features.
enum ClinicalColumn : int {
  kMap = 0,
  kAge,
  kUrine,
  kWeight,
  kCreatinine,
  kLactate,
  kBicarbonate,
  kBun,
  kClinicalColumns,
};

const std::vector<std::string>& clinical_feature_names();

// Raw-unit thresholds of the rule region.
struct ClinicalThresholds {
  double lactate = 0.0;
  double bicarbonate = 0.0;
  double creatinine = 0.0;
  double bun = 0.0;
  double urine = 0.0;
};

bool in_clinical_region(const ClinicalThresholds& t, const double* row);

// 70/15/15 split stratified by label, standardised with the training split;
// meta["region_std"] carries the thresholds in standardised units and
// meta["region_raw"] the raw ones.
DatasetSplits clinical_dataset(const ClinicalConfig& config, Rng& rng);

// ---- split helpers ----

// Rows shuffled within each stratum and interleaved so every contiguous block
// keeps the strata proportions.
std::vector<Index> stratified_order(const std::vector<int>& strata, Rng& rng);

// Contiguous batches of `order`; the last batch may be short.
std::vector<std::vector<Index>> make_batches(const std::vector<Index>& order, Index batch_size);

std::vector<Index> shuffled_indices(Index n, Rng& rng);

// 70/15/15 split of a stratified order.
DatasetSplits split_dataset(const Dataset& all, const std::vector<int>& strata, Rng& rng);

// ---- all tasks ----

struct DataGenConfig {
  Task task = Task::pendulum;
  PendulumConfig pendulum;
  Index pendulum_train_trajectories = 360;
  Index pendulum_eval_trajectories = 40;
  Index pendulum_traj_len = 50;
  DecoyConfig decoy;
  Index decoy_train = 2000;
  Index decoy_val = 500;
  Index decoy_test = 1000;
  FairnessConfig fairness;
  ClinicalConfig clinical;
};

// Train/val/test for the configured task, deterministic in `seed`.
DatasetSplits generate_task_data(const DataGenConfig& config, std::uint64_t seed);

}  // namespace bnnp
