#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bnnp/nn.hpp"
#include "bnnp/prior_learning.hpp"
#include "bnnp/variational.hpp"

namespace bnnp {

enum class TransferMethod { m1, m1m2, mmd, m1_swag };

std::string to_string(TransferMethod m);
// Accepts "m1-swag" as well as "m1_swag".
TransferMethod parse_transfer_method(std::string_view s);

struct TransferConfig {
  TransferMethod method = TransferMethod::m1;
  Index n_function_samples = 32;  // per side and step
  Index probe_set_size = 0;       // 0: every probe row
  double kernel_bandwidth = 0.0;  // <= 0: median heuristic on the source sample
  double learning_rate = 1e-2;
  int epochs = 200;               // optimisation steps (m1, m1m2, mmd) or regression epochs (m1_swag)
  std::uint64_t seed = 0;
  ArchSpec target_arch;
  Index target_rank = 5;
  double target_jitter = 1e-3;
  double init_scale = 0.1;
  bool init_from_source = false;  // start from the source distribution (same architecture only)
  // m1_swag: SGD regression on the source mean function, then SWAG snapshots.
  double swag_learning_rate = 1e-2;
  Index swag_batch_size = 32;
  int snapshot_interval_epochs = 5;
  int snapshots = 3;

  void validate() const;
};

// n x (m * output_dim) matrix; row i holds sample i evaluated on every probe
// point, point-major and output-minor.
RowMatrix function_samples(const PriorDensity& prior, const ArchSpec& arch, const RowMatrix& probes, Index n,
                           Rng& rng);

// Biased V-statistic MMD^2 with k(a, b) = exp(-||a - b||^2 / (2 gamma^2)).
double mmd2(const RowMatrix& W, const RowMatrix& U, double gamma);
// MMD^2 and its gradient with respect to the rows of U.
double mmd2_with_grad(const RowMatrix& W, const RowMatrix& U, double gamma, RowMatrix& dU);

// gamma^2 = median pairwise squared distance / 2, gamma floored at 1e-6.
double median_bandwidth(const RowMatrix& rows);

// Mean over coordinates of the squared difference of the sample means (m1);
// m1m2 adds the same term for the second moments.
double moment_discrepancy(const RowMatrix& W, const RowMatrix& U, bool second_moment, RowMatrix* dU);

struct TransferResult {
  Prior prior;
  std::vector<double> objective;  // per step (or per epoch for m1_swag)
};

TransferResult transfer_moment(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes,
                               const TransferConfig& cfg);
TransferResult transfer_mmd(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes,
                            const TransferConfig& cfg);
TransferResult transfer_m1_swag(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes,
                                const TransferConfig& cfg);

// Dispatches on cfg.method.
TransferResult transfer_prior(const Prior& source, const ArchSpec& source_arch, const RowMatrix& probes,
                              const TransferConfig& cfg);

}  // namespace bnnp
