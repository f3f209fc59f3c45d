#include "esgraph/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "esgraph/error.hpp"

namespace esgraph::diff {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  fail(ErrorCategory::kDomain, std::string(op) + ": shape mismatch " + a.shape_str() +
                                   " vs " + b.shape_str());
}

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) fail(ErrorCategory::kDomain, std::string(op) + ": " + msg);
}

ConstMap cmap(const Tensor& t) {
  static const double dummy = 0.0;
  const double* p = t.size() ? t.data() : &dummy;
  return ConstMap(p, static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.rank() == 1 ? 1 : t.cols()));
}

MutMap mmap(Tensor& t) {
  static double dummy = 0.0;
  double* p = t.size() ? t.data() : &dummy;
  return MutMap(p, static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.rank() == 1 ? 1 : t.cols()));
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }
const std::vector<std::size_t>& Var::shape() const { return value().shape(); }

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::make(Op op, std::vector<int> args, Tensor value) {
  Node n;
  n.op = op;
  n.args = std::move(args);
  n.value = std::move(value);
  return Var{this, push(std::move(n))};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    fail(ErrorCategory::kInternal, "Var does not belong to this tape");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  node(v);
  if (!ran_backward_) fail(ErrorCategory::kInternal, "Tape::grad before backward");
  return grads_[static_cast<std::size_t>(v.id)];
}

void Tape::check_output(const char* op, const Tensor& t) const {
  if (!t.all_finite())
    fail(ErrorCategory::kDomain, std::string(op) + ": non-finite value produced");
}

Var Tape::constant(Tensor value) {
  check_output("constant", value);
  return make(Op::kConst, {}, std::move(value));
}

Var Tape::param(Parameter& p) {
  check_output("param", p.value);
  Node n;
  n.op = Op::kParam;
  n.value = p.value;
  n.param = &p;
  return Var{this, push(std::move(n))};
}

Var Tape::affine(Var x, Var w, Var b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  require(xv.rank() == 2 && wv.rank() == 2, "affine", "expects rank-2 x and w");
  if (xv.cols() != wv.rows()) shape_error("affine", xv, wv);
  const std::size_t n = xv.rows(), m = wv.cols();
  Tensor out({n, m});
  if (n > 0) mmap(out) = cmap(xv) * cmap(wv);
  if (b.valid()) {
    const Tensor& bv = value(b);
    require(bv.rank() == 1, "affine", "bias must be rank-1");
    if (bv.size() != m) shape_error("affine", wv, bv);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) += bv[j];
  }
  check_output("affine", out);
  std::vector<int> args = {x.id, w.id};
  if (b.valid()) args.push_back(b.id);
  return make(Op::kAffine, std::move(args), std::move(out));
}

Var Tape::matmul(Var a, Var b, bool transpose_b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2, "matmul", "expects rank-2 operands");
  const std::size_t k = av.cols();
  const std::size_t bk = transpose_b ? bv.cols() : bv.rows();
  if (k != bk) shape_error("matmul", av, bv);
  const std::size_t n = av.rows();
  const std::size_t m = transpose_b ? bv.rows() : bv.cols();
  Tensor out({n, m});
  if (n > 0 && m > 0) {
    if (transpose_b)
      mmap(out) = cmap(av) * cmap(bv).transpose();
    else
      mmap(out) = cmap(av) * cmap(bv);
  }
  check_output("matmul", out);
  Node node;
  node.op = Op::kMatmul;
  node.args = {a.id, b.id};
  node.value = std::move(out);
  node.i0 = transpose_b ? 1 : 0;
  return Var{this, push(std::move(node))};
}

Var Tape::relu(Var x) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  check_output("relu", out);
  return make(Op::kRelu, {x.id}, std::move(out));
}

Var Tape::softmax_rows(Var x) {
  const Tensor& xv = value(x);
  require(xv.rank() == 2, "softmax", "expects rank-2 input");
  Tensor out(xv.shape());
  const std::size_t n = xv.rows(), d = xv.cols();
  require(d > 0, "softmax", "empty rows");
  for (std::size_t i = 0; i < n; ++i) {
    double mx = xv.at(i, 0);
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, xv.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = std::exp(xv.at(i, j) - mx);
      out.at(i, j) = e;
      s += e;
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) /= s;
  }
  check_output("softmax", out);
  return make(Op::kSoftmaxRows, {x.id}, std::move(out));
}

Var Tape::cross_entropy_mean(Var logits, const std::vector<int>& labels) {
  const Tensor& z = value(logits);
  require(z.rank() == 2, "cross_entropy", "expects rank-2 logits");
  const std::size_t n = z.rows(), c = z.cols();
  require(n > 0, "cross_entropy", "empty batch");
  require(labels.size() == n, "cross_entropy", "label count does not match rows");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    require(label >= 0 && static_cast<std::size_t>(label) < c, "cross_entropy",
            "label out of range");
    double mx = z.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z.at(i, j) - mx);
    total += std::log(s) + mx - z.at(i, static_cast<std::size_t>(label));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  check_output("cross_entropy", out);
  Node node;
  node.op = Op::kCrossEntropyMean;
  node.args = {logits.id};
  node.value = std::move(out);
  node.idx = labels;
  return Var{this, push(std::move(node))};
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat", "no inputs");
  const std::size_t n = value(xs[0]).rows();
  std::size_t total = 0;
  for (const Var& v : xs) {
    const Tensor& t = value(v);
    require(t.rank() == 2, "concat", "expects rank-2 inputs");
    if (t.rows() != n) shape_error("concat", value(xs[0]), t);
    total += t.cols();
  }
  Tensor out({n, total});
  std::size_t off = 0;
  for (const Var& v : xs) {
    const Tensor& t = value(v);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < t.cols(); ++j) out.at(i, off + j) = t.at(i, j);
    off += t.cols();
  }
  std::vector<int> args;
  for (const Var& v : xs) args.push_back(v.id);
  return make(Op::kConcatCols, std::move(args), std::move(out));
}

Var Tape::slice_cols(Var x, std::size_t start, std::size_t len) {
  const Tensor& xv = value(x);
  require(xv.rank() == 2, "slice", "expects rank-2 input");
  require(start + len <= xv.cols(), "slice", "column range out of bounds");
  Tensor out({xv.rows(), len});
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < len; ++j) out.at(i, j) = xv.at(i, start + j);
  Node node;
  node.op = Op::kSliceCols;
  node.args = {x.id};
  node.value = std::move(out);
  node.i0 = start;
  node.i1 = len;
  return Var{this, push(std::move(node))};
}

Var Tape::gather_rows(Var x, const std::vector<int>& idx) {
  const Tensor& xv = value(x);
  require(xv.rank() == 2, "gather", "expects rank-2 input");
  Tensor out({idx.size(), xv.cols()});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < xv.rows(), "gather",
            "row index out of range");
    for (std::size_t j = 0; j < xv.cols(); ++j)
      out.at(i, j) = xv.at(static_cast<std::size_t>(idx[i]), j);
  }
  Node node;
  node.op = Op::kGatherRows;
  node.args = {x.id};
  node.value = std::move(out);
  node.idx = idx;
  return Var{this, push(std::move(node))};
}

Var Tape::segment_sum(Var x, const std::vector<int>& seg, std::size_t num_segments) {
  const Tensor& xv = value(x);
  require(xv.rank() == 2, "segment_sum", "expects rank-2 input");
  require(seg.size() == xv.rows(), "segment_sum", "segment ids do not match rows");
  Tensor out({num_segments, xv.cols()});
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    require(seg[r] >= 0 && static_cast<std::size_t>(seg[r]) < num_segments,
            "segment_sum", "segment id out of range");
    for (std::size_t j = 0; j < xv.cols(); ++j)
      out.at(static_cast<std::size_t>(seg[r]), j) += xv.at(r, j);
  }
  check_output("segment_sum", out);
  Node node;
  node.op = Op::kSegmentSum;
  node.args = {x.id};
  node.value = std::move(out);
  node.idx = seg;
  node.i0 = num_segments;
  return Var{this, push(std::move(node))};
}

Var Tape::segment_max(Var x, const std::vector<int>& seg, std::size_t num_segments) {
  const Tensor& xv = value(x);
  require(xv.rank() == 2, "segment_max", "expects rank-2 input");
  require(seg.size() == xv.rows(), "segment_max", "segment ids do not match rows");
  const std::size_t d = xv.cols();
  Tensor out({num_segments, d});
  // argmax row per (segment, column); -1 marks an empty segment, whose max is
  // the zero vector by convention. First maximal row wins on exact ties.
  std::vector<int> argmax(num_segments * d, -1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    require(seg[r] >= 0 && static_cast<std::size_t>(seg[r]) < num_segments,
            "segment_max", "segment id out of range");
    const std::size_t s = static_cast<std::size_t>(seg[r]);
    for (std::size_t j = 0; j < d; ++j) {
      const double v = xv.at(r, j);
      int& am = argmax[s * d + j];
      if (am < 0 || v > out.at(s, j)) {
        out.at(s, j) = v;
        am = static_cast<int>(r);
      }
    }
  }
  check_output("segment_max", out);
  Node node;
  node.op = Op::kSegmentMax;
  node.args = {x.id};
  node.value = std::move(out);
  node.idx = std::move(argmax);
  node.i0 = num_segments;
  return Var{this, push(std::move(node))};
}

Var Tape::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  check_output("add", out);
  return make(Op::kAdd, {a.id, b.id}, std::move(out));
}

Var Tape::sub(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  check_output("sub", out);
  return make(Op::kSub, {a.id, b.id}, std::move(out));
}

Var Tape::mul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  check_output("mul", out);
  return make(Op::kMul, {a.id, b.id}, std::move(out));
}

Var Tape::row_scale(Var x, Var s) {
  const Tensor& xv = value(x);
  const Tensor& sv = value(s);
  require(xv.rank() == 2, "row_scale", "expects rank-2 x");
  const bool ok = (sv.rank() == 1 && sv.size() == xv.rows()) ||
                  (sv.rank() == 2 && sv.rows() == xv.rows() && sv.cols() == 1);
  if (!ok) shape_error("row_scale", xv, sv);
  Tensor out = xv;
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < xv.cols(); ++j) out.at(i, j) *= sv[i];
  check_output("row_scale", out);
  return make(Op::kRowScale, {x.id, s.id}, std::move(out));
}

Var Tape::scale(Var x, double c) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  check_output("scale", out);
  Node node;
  node.op = Op::kScale;
  node.args = {x.id};
  node.value = std::move(out);
  node.c0 = c;
  return Var{this, push(std::move(node))};
}

Var Tape::add_scalar(Var x, double c) {
  Tensor out = value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
  check_output("add_scalar", out);
  Node node;
  node.op = Op::kAddScalar;
  node.args = {x.id};
  node.value = std::move(out);
  node.c0 = c;
  return Var{this, push(std::move(node))};
}

Var Tape::sum_all(Var x) {
  const Tensor& xv = value(x);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  Tensor out = Tensor::scalar(s);
  check_output("sum", out);
  return make(Op::kSumAll, {x.id}, std::move(out));
}

Var Tape::mean_all(Var x) {
  const Tensor& xv = value(x);
  require(xv.size() > 0, "mean", "empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  Tensor out = Tensor::scalar(s / static_cast<double>(xv.size()));
  check_output("mean", out);
  return make(Op::kMeanAll, {x.id}, std::move(out));
}

Var Tape::sq_dist_rows(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2, "sq_dist", "expects rank-2 operands");
  if (!av.same_shape(bv)) shape_error("sq_dist", av, bv);
  Tensor out({av.rows(), 1});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) {
      const double d = av.at(i, j) - bv.at(i, j);
      s += d * d;
    }
    out.at(i, 0) = s;
  }
  check_output("sq_dist", out);
  return make(Op::kSqDistRows, {a.id, b.id}, std::move(out));
}

Var Tape::cosine_rows(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2, "cosine", "expects rank-2 operands");
  if (!av.same_shape(bv)) shape_error("cosine", av, bv);
  Tensor out({av.rows(), 1});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) {
      dot += av.at(i, j) * bv.at(i, j);
      na += av.at(i, j) * av.at(i, j);
      nb += bv.at(i, j) * bv.at(i, j);
    }
    require(na > 0.0 && nb > 0.0, "cosine", "zero-norm row");
    out.at(i, 0) = dot / (std::sqrt(na) * std::sqrt(nb));
  }
  check_output("cosine", out);
  return make(Op::kCosineRows, {a.id, b.id}, std::move(out));
}

Var Tape::dropout(Var x, double rate, bool train) {
  require(rate >= 0.0 && rate < 1.0, "dropout", "rate must be in [0,1)");
  if (!train || rate == 0.0) return x;
  require(rng_ != nullptr, "dropout", "tape has no RandomSource");
  const Tensor& xv = value(x);
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const bool keep = rng_->uniform01() >= rate;
    mask[i] = keep ? 1.0 : 0.0;
    out[i] = keep ? xv[i] * keep_scale : 0.0;
  }
  check_output("dropout", out);
  Node node;
  node.op = Op::kDropout;
  node.args = {x.id};
  node.value = std::move(out);
  node.aux = std::move(mask);
  node.c0 = keep_scale;
  return Var{this, push(std::move(node))};
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
  const Tensor& xv = value(x);
  require(Tensor::count(shape) == xv.size(), "reshape", "element count mismatch");
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i];
  Node node;
  node.op = Op::kReshape;
  node.args = {x.id};
  node.value = std::move(out);
  node.saved_shape = xv.shape();
  return Var{this, push(std::move(node))};
}

void Tape::backward(Var loss) {
  if (consumed_)
    fail(ErrorCategory::kDomain, "backward: tape already consumed by a previous backward");
  const Node& loss_node = node(loss);
  if (loss_node.value.size() != 1)
    fail(ErrorCategory::kDomain, "backward: loss must be a scalar");
  consumed_ = true;
  ran_backward_ = true;

  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads_.emplace_back(n.value.shape());
  grads_[static_cast<std::size_t>(loss.id)][0] = 1.0;

  for (int i = loss.id; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const Tensor& g = grads_[static_cast<std::size_t>(i)];
    switch (n.op) {
      case Op::kConst:
        break;
      case Op::kParam:
        for (std::size_t k = 0; k < g.size(); ++k) n.param->grad[k] += g[k];
        break;
      case Op::kAffine: {
        const Tensor& xv = nodes_[n.args[0]].value;
        const Tensor& wv = nodes_[n.args[1]].value;
        Tensor& gx = grads_[n.args[0]];
        Tensor& gw = grads_[n.args[1]];
        if (xv.rows() > 0) {
          mmap(gx).noalias() += cmap(g) * cmap(wv).transpose();
          mmap(gw).noalias() += cmap(xv).transpose() * cmap(g);
        }
        if (n.args.size() == 3) {
          Tensor& gb = grads_[n.args[2]];
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
        }
        break;
      }
      case Op::kMatmul: {
        const Tensor& av = nodes_[n.args[0]].value;
        const Tensor& bv = nodes_[n.args[1]].value;
        Tensor& ga = grads_[n.args[0]];
        Tensor& gb = grads_[n.args[1]];
        if (g.rows() > 0 && g.cols() > 0) {
          if (n.i0) {  // y = a * b^T
            mmap(ga).noalias() += cmap(g) * cmap(bv);
            mmap(gb).noalias() += cmap(g).transpose() * cmap(av);
          } else {
            mmap(ga).noalias() += cmap(g) * cmap(bv).transpose();
            mmap(gb).noalias() += cmap(av).transpose() * cmap(g);
          }
        }
        break;
      }
      case Op::kRelu: {
        const Tensor& xv = nodes_[n.args[0]].value;
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t k = 0; k < g.size(); ++k)
          if (xv[k] > 0.0) gx[k] += g[k];
        break;
      }
      case Op::kSoftmaxRows: {
        const Tensor& y = n.value;
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c)
            gx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
        break;
      }
      case Op::kCrossEntropyMean: {
        const Tensor& z = nodes_[n.args[0]].value;
        Tensor& gz = grads_[n.args[0]];
        const double gup = g[0] / static_cast<double>(z.rows());
        for (std::size_t r = 0; r < z.rows(); ++r) {
          double mx = z.at(r, 0);
          for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z.at(r, c));
          double s = 0.0;
          for (std::size_t c = 0; c < z.cols(); ++c) s += std::exp(z.at(r, c) - mx);
          for (std::size_t c = 0; c < z.cols(); ++c) {
            double p = std::exp(z.at(r, c) - mx) / s;
            if (static_cast<int>(c) == n.idx[r]) p -= 1.0;
            gz.at(r, c) += gup * p;
          }
        }
        break;
      }
      case Op::kConcatCols: {
        std::size_t off = 0;
        for (int arg : n.args) {
          const Tensor& t = nodes_[arg].value;
          Tensor& gt = grads_[arg];
          for (std::size_t r = 0; r < t.rows(); ++r)
            for (std::size_t c = 0; c < t.cols(); ++c) gt.at(r, c) += g.at(r, off + c);
          off += t.cols();
        }
        break;
      }
      case Op::kSliceCols: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gx.at(r, n.i0 + c) += g.at(r, c);
        break;
      }
      case Op::kGatherRows: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c)
            gx.at(static_cast<std::size_t>(n.idx[r]), c) += g.at(r, c);
        break;
      }
      case Op::kSegmentSum: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t r = 0; r < gx.rows(); ++r)
          for (std::size_t c = 0; c < gx.cols(); ++c)
            gx.at(r, c) += g.at(static_cast<std::size_t>(n.idx[r]), c);
        break;
      }
      case Op::kSegmentMax: {
        Tensor& gx = grads_[n.args[0]];
        const std::size_t d = g.cols();
        for (std::size_t s = 0; s < g.rows(); ++s)
          for (std::size_t c = 0; c < d; ++c) {
            const int r = n.idx[s * d + c];
            if (r >= 0) gx.at(static_cast<std::size_t>(r), c) += g.at(s, c);
          }
        break;
      }
      case Op::kAdd: {
        Tensor& ga = grads_[n.args[0]];
        Tensor& gb = grads_[n.args[1]];
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += g[k];
          gb[k] += g[k];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = grads_[n.args[0]];
        Tensor& gb = grads_[n.args[1]];
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += g[k];
          gb[k] -= g[k];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& av = nodes_[n.args[0]].value;
        const Tensor& bv = nodes_[n.args[1]].value;
        Tensor& ga = grads_[n.args[0]];
        Tensor& gb = grads_[n.args[1]];
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga[k] += g[k] * bv[k];
          gb[k] += g[k] * av[k];
        }
        break;
      }
      case Op::kRowScale: {
        const Tensor& xv = nodes_[n.args[0]].value;
        const Tensor& sv = nodes_[n.args[1]].value;
        Tensor& gx = grads_[n.args[0]];
        Tensor& gs = grads_[n.args[1]];
        for (std::size_t r = 0; r < xv.rows(); ++r) {
          double acc = 0.0;
          for (std::size_t c = 0; c < xv.cols(); ++c) {
            gx.at(r, c) += g.at(r, c) * sv[r];
            acc += g.at(r, c) * xv.at(r, c);
          }
          gs[r] += acc;
        }
        break;
      }
      case Op::kScale: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * n.c0;
        break;
      }
      case Op::kAddScalar: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
        break;
      }
      case Op::kSumAll: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g[0];
        break;
      }
      case Op::kMeanAll: {
        Tensor& gx = grads_[n.args[0]];
        const double s = g[0] / static_cast<double>(gx.size());
        for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += s;
        break;
      }
      case Op::kSqDistRows: {
        const Tensor& av = nodes_[n.args[0]].value;
        const Tensor& bv = nodes_[n.args[1]].value;
        Tensor& ga = grads_[n.args[0]];
        Tensor& gb = grads_[n.args[1]];
        for (std::size_t r = 0; r < av.rows(); ++r) {
          const double gr = 2.0 * g.at(r, 0);
          for (std::size_t c = 0; c < av.cols(); ++c) {
            const double d = av.at(r, c) - bv.at(r, c);
            ga.at(r, c) += gr * d;
            gb.at(r, c) -= gr * d;
          }
        }
        break;
      }
      case Op::kCosineRows: {
        const Tensor& av = nodes_[n.args[0]].value;
        const Tensor& bv = nodes_[n.args[1]].value;
        Tensor& ga = grads_[n.args[0]];
        Tensor& gb = grads_[n.args[1]];
        for (std::size_t r = 0; r < av.rows(); ++r) {
          double na2 = 0.0, nb2 = 0.0;
          for (std::size_t c = 0; c < av.cols(); ++c) {
            na2 += av.at(r, c) * av.at(r, c);
            nb2 += bv.at(r, c) * bv.at(r, c);
          }
          const double na = std::sqrt(na2), nb = std::sqrt(nb2);
          const double cosv = n.value.at(r, 0);
          const double gr = g.at(r, 0);
          for (std::size_t c = 0; c < av.cols(); ++c) {
            ga.at(r, c) += gr * (bv.at(r, c) / (na * nb) - cosv * av.at(r, c) / na2);
            gb.at(r, c) += gr * (av.at(r, c) / (na * nb) - cosv * bv.at(r, c) / nb2);
          }
        }
        break;
      }
      case Op::kDropout: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * n.aux[k] * n.c0;
        break;
      }
      case Op::kReshape: {
        Tensor& gx = grads_[n.args[0]];
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
        break;
      }
    }
  }
}

double grad_check(const std::function<Var(Tape&)>& build_loss,
                  std::span<Parameter* const> params, double step,
                  std::size_t max_coords_per_param, RandomSource* picker) {
  if (!(step > 0.0 && step <= 1e-3))
    fail(ErrorCategory::kDomain, "grad_check: step must be in (0, 1e-3]");

  const auto eval = [&]() {
    Tape t;
    Var loss = build_loss(t);
    if (loss.value().size() != 1)
      fail(ErrorCategory::kDomain, "grad_check: loss must be a scalar");
    return loss.value().item();
  };

  for (Parameter* p : params) p->zero_grad();
  {
    Tape t;
    Var loss = build_loss(t);
    if (loss.value().size() != 1)
      fail(ErrorCategory::kDomain, "grad_check: loss must be a scalar");
    t.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  RandomSource fallback(0x5eedULL);
  RandomSource* pick = picker ? picker : &fallback;

  double max_rel = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    std::vector<std::size_t> coords(p->value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > max_coords_per_param) {
      pick->shuffle(coords);
      coords.resize(max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      const double orig = p->value[c];
      p->value[c] = orig + step;
      const double fp = eval();
      p->value[c] = orig - step;
      const double fm = eval();
      p->value[c] = orig;
      const double numeric = (fp - fm) / (2.0 * step);
      const double rel =
          std::abs(analytic[pi][c] - numeric) / std::max(1.0, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace esgraph::diff
