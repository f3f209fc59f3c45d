#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "esgraph/random.hpp"
#include "esgraph/tensor.hpp"

namespace esgraph::diff {

// A named learnable tensor. Gradients accumulate across backward passes until
// zero_grad is called.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

enum class Op {
  kConst,
  kParam,
  kAffine,
  kMatmul,
  kRelu,
  kSoftmaxRows,
  kCrossEntropyMean,
  kConcatCols,
  kSliceCols,
  kGatherRows,
  kSegmentSum,
  kSegmentMax,
  kAdd,
  kSub,
  kMul,
  kRowScale,
  kScale,
  kAddScalar,
  kSumAll,
  kMeanAll,
  kSqDistRows,
  kCosineRows,
  kDropout,
  kReshape,
};

// Recording tape for reverse-mode differentiation over the primitive set used
// by the models. Single-threaded per instance; one backward pass per tape.
class Tape {
 public:
  explicit Tape(RandomSource* rng = nullptr) : rng_(rng) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var param(Parameter& p);

  // y = x * w + b with x:(n,k), w:(k,m), b:(m). b may be invalid for a pure
  // linear map.
  Var affine(Var x, Var w, Var b);
  Var matmul(Var a, Var b, bool transpose_b = false);
  Var relu(Var x);
  // Numerically stable per-row softmax (max subtraction).
  Var softmax_rows(Var x);
  // Mean over rows of (logsumexp(row) - row[label]).
  Var cross_entropy_mean(Var logits, const std::vector<int>& labels);
  Var concat_cols(const std::vector<Var>& xs);
  Var slice_cols(Var x, std::size_t start, std::size_t len);
  Var gather_rows(Var x, const std::vector<int>& idx);
  Var segment_sum(Var x, const std::vector<int>& seg, std::size_t num_segments);
  // Elementwise max per segment with argmax recording; empty segments yield
  // the zero vector and receive no gradient.
  Var segment_max(Var x, const std::vector<int>& seg, std::size_t num_segments);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // x:(n,d) scaled per row by s:(n,1) or (n).
  Var row_scale(Var x, Var s);
  Var scale(Var x, double c);
  Var add_scalar(Var x, double c);
  Var sum_all(Var x);
  Var mean_all(Var x);
  // Row-wise squared Euclidean distance -> (n,1).
  Var sq_dist_rows(Var a, Var b);
  // Row-wise cosine similarity -> (n,1); zero-norm rows are an error.
  Var cosine_rows(Var a, Var b);
  // Inverted dropout: kept entries are scaled by 1/(1-rate). rate 0 or eval
  // mode returns x unchanged. Masks are drawn from the tape's RandomSource.
  Var dropout(Var x, double rate, bool train);
  Var reshape(Var x, std::vector<std::size_t> shape);

  // Accumulates d(loss)/d(p) into every bound Parameter's grad. The tape is
  // consumed; a second call is an error.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  void set_rng(RandomSource* rng) { rng_ = rng; }

 private:
  struct Node {
    Op op;
    std::vector<int> args;
    Tensor value;
    std::vector<int> idx;                // labels / gather / segments / argmax
    std::vector<std::size_t> saved_shape;  // reshape input shape
    std::size_t i0 = 0, i1 = 0;
    double c0 = 0.0;
    Tensor aux;  // dropout mask
    Parameter* param = nullptr;
  };

  int push(Node n);
  Var make(Op op, std::vector<int> args, Tensor value);
  const Node& node(Var v) const;
  void check_output(const char* op, const Tensor& t) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  RandomSource* rng_ = nullptr;
  bool consumed_ = false;
  bool ran_backward_ = false;
};

// Max over sampled parameter coordinates of
// |analytic - numeric| / max(1, |numeric|), with numeric gradients from
// central finite differences of step `step`. `build_loss` must rebuild the
// same scalar computation on any fresh tape (it runs 1 + 2*coords times).
double grad_check(const std::function<Var(Tape&)>& build_loss,
                  std::span<Parameter* const> params, double step,
                  std::size_t max_coords_per_param = SIZE_MAX,
                  RandomSource* picker = nullptr);

}  // namespace esgraph::diff
