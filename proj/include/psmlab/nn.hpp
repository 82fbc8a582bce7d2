#pragma once

// Minimal reverse-mode autograd over dense NCHW tensors, double precision
// throughout. Double beats float for the naive conv loops on this target
// and removes a precision headache from the finite-difference checks.
//
// Usage: wrap persistent parameters in make_param, inputs in make_input,
// compose ops, call backward on a scalar. With grad_mode() off no graph is
// recorded and ops are pure value computations.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "psmlab/common.hpp"

namespace psmlab::nn {

struct Tensor {
    int n = 1, c = 1, h = 1, w = 1;
    std::vector<double> v;

    static Tensor zeros(int n, int c, int h, int w) {
        Tensor t;
        t.n = n;
        t.c = c;
        t.h = h;
        t.w = w;
        t.v.assign(static_cast<size_t>(n) * c * h * w, 0.0);
        return t;
    }
    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    double& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    double at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
};

struct VarNode {
    Tensor value;
    Tensor grad;  // allocated on demand, same shape as value
    bool requires_grad = false;
    std::string name;  // set on parameters only
    std::vector<std::shared_ptr<VarNode>> parents;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.v.empty()) grad = Tensor::zeros(value.n, value.c, value.h, value.w);
    }
};

class Var {
  public:
    Var() = default;
    explicit Var(std::shared_ptr<VarNode> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& value() { return node_->value; }
    Tensor& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::string& name() const { return node_->name; }
    bool defined() const { return node_ != nullptr; }
    bool requires_grad() const { return node_->requires_grad; }
    std::shared_ptr<VarNode> node() const { return node_; }

  private:
    std::shared_ptr<VarNode> node_;
};

Var make_param(const std::string& name, Tensor init);
Var make_input(Tensor value);

/// Thread-local graph-recording switch, on by default.
bool& grad_mode();

struct NoGrad {
    bool saved;
    NoGrad() : saved(grad_mode()) { grad_mode() = false; }
    ~NoGrad() { grad_mode() = saved; }
};

// ---- ops -------------------------------------------------------------

/// 3x3 convolution, zero padding 1, stride 1 or 2. w: [out_c, in_c, 3, 3].
Var conv3x3(const Var& x, const Var& w, const Var& b, int stride);
/// Fully connected on flattened per-sample features. w: [out_d, in_d].
Var dense(const Var& x, const Var& w, const Var& b);
Var leaky_relu(const Var& x, double slope = 0.2);
Var sigmoid(const Var& x);
/// Nearest-neighbour 2x spatial upsample.
Var upsample2(const Var& x);
Var concat_c(const Var& a, const Var& b);
/// Reinterpret each sample as [c,h,w]; element count must match.
Var reshape(const Var& x, int c, int h, int w);
/// Flip along width, used by the symmetry loss.
Var mirror_w(const Var& x);
/// Mean absolute difference, scalar output.
Var l1(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var scale(const Var& x, double k);

/// Reverse-mode sweep from a scalar loss.
void backward(const Var& loss);

// ---- init and optimizer ----------------------------------------------

/// He-style normal init, sd = sqrt(2 / fan_in).
Tensor he_init(int n, int c, int h, int w, int fan_in, Rng& rng);

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
  public:
    Adam(std::vector<Var> params, AdamConfig config);

    void zero_grad();
    void step();
    long steps_taken() const { return step_; }
    const std::vector<Var>& params() const { return params_; }

  private:
    std::vector<Var> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig config_;
    long step_ = 0;
};

}  // namespace psmlab::nn
