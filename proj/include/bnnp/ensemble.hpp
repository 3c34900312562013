#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "bnnp/nn.hpp"
#include "bnnp/types.hpp"

namespace bnnp {

enum class Averaging { logits, predictions };

std::string to_string(Averaging a);
Averaging parse_averaging(std::string_view s);

// Posterior samples of one architecture.
struct Ensemble {
  ArchSpec arch;
  std::vector<ParamVector> members;
  Averaging averaging = Averaging::logits;

  void validate() const;
  Index size() const noexcept { return static_cast<Index>(members.size()); }
};

// Averaged prediction after the head: logits mode averages the raw outputs
// and applies the head once; predictions mode applies the head per member and
// averages.
Vector ensemble_predict(const Ensemble& e, VectorRef x);

// Pre-head outputs h of the averaged predictor, chosen so apply_head(h)
// equals ensemble_predict, together with dh/dx. A single member returns its
// own outputs and Jacobian unchanged.
struct EffectiveOutput {
  Vector logits;
  Matrix jacobian;
};
EffectiveOutput ensemble_effective_output(const Ensemble& e, VectorRef x, bool with_jacobian);

}  // namespace bnnp
