#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "bnnp/rng.hpp"
#include "bnnp/types.hpp"

namespace bnnp {

enum class Activation { relu, softplus };
enum class OutputHead { identity, sigmoid, softmax };

std::string to_string(Activation a);
std::string to_string(OutputHead h);
Activation parse_activation(std::string_view s);
OutputHead parse_output_head(std::string_view s);

// Fully connected feedforward topology: layer_sizes = (input, hidden..., output).
struct ArchSpec {
  std::vector<int> layer_sizes;
  Activation activation = Activation::relu;
  OutputHead head = OutputHead::identity;

  void validate() const;
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  // Sum over layers of (fan_in + 1) * fan_out.
  Index param_count() const;

  bool operator==(const ArchSpec&) const = default;
};

// "4,8,4" <-> {4, 8, 4}
std::vector<int> parse_layer_sizes(std::string_view text);
std::string format_layer_sizes(const std::vector<int>& sizes);

struct ParamCoord {
  int layer = 0;
  int row = 0;
  int col = 0;  // unused for biases
  bool bias = false;
  bool operator==(const ParamCoord&) const = default;
};

struct LayerParams {
  Matrix weight;  // fan_out x fan_in
  Vector bias;
};

// Scalar function F of the network output whose input gradient is penalised by
// Mlp::input_grad_penalty. The penalty needs both dF/dh and (d2F/dh2) v.
struct OutputFunctional {
  enum class Kind {
    component,              // F = h_c
    log_softmax_component,  // F = h_c - logsumexp(h)
    log_prob_sum,           // F = sum_c (h_c - logsumexp(h))
  };
  Kind kind = Kind::component;
  int component = 0;

  Vector gradient(const Vector& h) const;
  Vector hessian_times(const Vector& h, const Vector& v) const;
};

struct MaskedGradNorm {
  double value = 0.0;
  ParamVector grad;
};

// Evaluates and differentiates one architecture over flat parameter vectors.
// Layer l's weights are stored row-major, followed by its bias, layer by layer.
class Mlp {
 public:
  explicit Mlp(ArchSpec arch);

  const ArchSpec& arch() const noexcept { return arch_; }
  Index param_count() const noexcept { return param_count_; }
  int input_dim() const { return arch_.input_dim(); }
  int output_dim() const { return arch_.output_dim(); }

  Index weight_offset(int layer) const { return weight_offset_[layer]; }
  Index bias_offset(int layer) const { return bias_offset_[layer]; }
  Index flat_index(const ParamCoord& c) const;
  ParamCoord coord(Index flat) const;

  std::vector<LayerParams> unflatten(const ParamVector& w) const;
  ParamVector flatten(const std::vector<LayerParams>& layers) const;

  // Weights ~ N(0, 2 / fan_in), biases zero.
  ParamVector init_he(Rng& rng) const;

  // Pre-head outputs (logits or raw regression values).
  Vector forward(const ParamVector& w, VectorRef x) const;

  // Gradient of upstream . forward(w, x) with respect to w.
  ParamVector grad_params(const ParamVector& w, VectorRef x, VectorRef upstream) const;
  // out += scale * grad_params(w, x, upstream); out must be param_count long.
  void accumulate_grad_params(const ParamVector& w, VectorRef x, VectorRef upstream, double scale,
                              ParamVector& out) const;

  // d forward / d x, shape output_dim x input_dim. ReLU'(0) = 0.
  Matrix input_jacobian(const ParamVector& w, VectorRef x) const;

  // sum_c sum_{j in mask} (d h_c / d x_j)^2 and its gradient in w (double backward).
  MaskedGradNorm masked_input_grad_norm(const ParamVector& w, VectorRef x,
                                        const std::vector<int>& mask) const;

  // || m .* grad_x F(h(x)) ||^2 for a 0/1 (or weighting) vector m; when grad is
  // non-null, its gradient in w is added into *grad.
  double input_grad_penalty(const ParamVector& w, VectorRef x, VectorRef mask_weights,
                            const OutputFunctional& f, ParamVector* grad) const;

  // 0/1 vector over the inputs; throws InvalidMask on out-of-range indices.
  Vector mask_vector(const std::vector<int>& mask) const;

 private:
  struct Trace {
    std::vector<Vector> a;  // a[0] = x, a[l + 1] = act(z[l])
    std::vector<Vector> z;  // pre-activations; z.back() is the output
  };

  void check_params(const ParamVector& w) const;
  void check_input(VectorRef x) const;
  Trace run(const ParamVector& w, VectorRef x) const;
  Eigen::Map<const RowMatrix> weight(const ParamVector& w, int layer) const;

  ArchSpec arch_;
  Index param_count_ = 0;
  std::vector<Index> weight_offset_;
  std::vector<Index> bias_offset_;
};

Vector apply_head(OutputHead head, const Vector& logits);

// Index of the largest entry; ties go to the lowest index.
int argmax_first(const Vector& v);

// log(sum(exp(v))) evaluated stably.
double log_sum_exp(const Vector& v);
Vector softmax(const Vector& v);
double sigmoid(double z);

}  // namespace bnnp
