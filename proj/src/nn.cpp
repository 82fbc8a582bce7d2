#include "psmlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace psmlab::nn {

namespace {

std::shared_ptr<VarNode> new_node(Tensor value) {
    auto node = std::make_shared<VarNode>();
    node->value = std::move(value);
    return node;
}

bool recording(std::initializer_list<const Var*> parents) {
    if (!grad_mode()) return false;
    for (const Var* p : parents)
        if (p->requires_grad()) return true;
    return false;
}

/// Wire up an op node: output requires grad iff recording, and the backward
/// closure sees parent/output nodes by shared pointer.
Var attach(Tensor out_value, std::initializer_list<const Var*> parents,
           std::function<void(VarNode&)> backward) {
    auto node = new_node(std::move(out_value));
    if (recording(parents)) {
        node->requires_grad = true;
        for (const Var* p : parents) node->parents.push_back(p->node());
        VarNode* raw = node.get();
        node->backward_fn = [raw, fn = std::move(backward)]() { fn(*raw); };
    }
    return Var(node);
}

}  // namespace

Var make_param(const std::string& name, Tensor init) {
    auto node = new_node(std::move(init));
    node->requires_grad = true;
    node->name = name;
    return Var(node);
}

Var make_input(Tensor value) { return Var(new_node(std::move(value))); }

bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

// ---- ops -------------------------------------------------------------

Var conv3x3(const Var& x, const Var& w, const Var& b, int stride) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (stride != 1 && stride != 2) fail(ErrorCode::InvalidParams, "conv stride must be 1 or 2");
    if (wv.h != 3 || wv.w != 3 || wv.c != xv.c)
        fail(ErrorCode::ShapeMismatch, "conv weight does not match input channels");
    if (bv.size() != static_cast<size_t>(wv.n))
        fail(ErrorCode::ShapeMismatch, "conv bias does not match output channels");

    int ho = (xv.h - 1) / stride + 1;
    int wo = (xv.w - 1) / stride + 1;
    Tensor out = Tensor::zeros(xv.n, wv.n, ho, wo);
    for (int in = 0; in < xv.n; ++in)
        for (int oc = 0; oc < wv.n; ++oc)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bv.v[static_cast<size_t>(oc)];
                    int base_y = oy * stride - 1, base_x = ox * stride - 1;
                    for (int ic = 0; ic < xv.c; ++ic)
                        for (int ky = 0; ky < 3; ++ky) {
                            int sy = base_y + ky;
                            if (sy < 0 || sy >= xv.h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                int sx = base_x + kx;
                                if (sx < 0 || sx >= xv.w) continue;
                                acc += xv.at(in, ic, sy, sx) * wv.at(oc, ic, ky, kx);
                            }
                        }
                    out.at(in, oc, oy, ox) = acc;
                }

    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    return attach(std::move(out), {&x, &w, &b}, [xn, wn, bn, stride](VarNode& o) {
        const Tensor& g = o.grad;
        const Tensor& xv = xn->value;
        const Tensor& wv = wn->value;
        xn->ensure_grad();
        wn->ensure_grad();
        bn->ensure_grad();
        for (int in = 0; in < xv.n; ++in)
            for (int oc = 0; oc < wv.n; ++oc)
                for (int oy = 0; oy < g.h; ++oy)
                    for (int ox = 0; ox < g.w; ++ox) {
                        double go = g.at(in, oc, oy, ox);
                        if (go == 0.0) continue;
                        bn->grad.v[static_cast<size_t>(oc)] += go;
                        int base_y = oy * stride - 1, base_x = ox * stride - 1;
                        for (int ic = 0; ic < xv.c; ++ic)
                            for (int ky = 0; ky < 3; ++ky) {
                                int sy = base_y + ky;
                                if (sy < 0 || sy >= xv.h) continue;
                                for (int kx = 0; kx < 3; ++kx) {
                                    int sx = base_x + kx;
                                    if (sx < 0 || sx >= xv.w) continue;
                                    xn->grad.at(in, ic, sy, sx) += go * wv.at(oc, ic, ky, kx);
                                    wn->grad.at(oc, ic, ky, kx) += go * xv.at(in, ic, sy, sx);
                                }
                            }
                    }
    });
}

Var dense(const Var& x, const Var& w, const Var& b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    int in_d = xv.c * xv.h * xv.w;
    int out_d = wv.n;
    if (wv.c * wv.h * wv.w != in_d) fail(ErrorCode::ShapeMismatch, "dense weight/input mismatch");
    if (bv.size() != static_cast<size_t>(out_d)) fail(ErrorCode::ShapeMismatch, "dense bias mismatch");

    Tensor out = Tensor::zeros(xv.n, out_d, 1, 1);
    for (int in = 0; in < xv.n; ++in) {
        const double* xp = &xv.v[static_cast<size_t>(in) * in_d];
        for (int od = 0; od < out_d; ++od) {
            const double* wp = &wv.v[static_cast<size_t>(od) * in_d];
            double acc = bv.v[static_cast<size_t>(od)];
            for (int id = 0; id < in_d; ++id) acc += xp[id] * wp[id];
            out.v[static_cast<size_t>(in) * out_d + od] = acc;
        }
    }

    auto xn = x.node();
    auto wn = w.node();
    auto bn = b.node();
    return attach(std::move(out), {&x, &w, &b}, [xn, wn, bn, in_d, out_d](VarNode& o) {
        const Tensor& g = o.grad;
        const Tensor& xv = xn->value;
        const Tensor& wv = wn->value;
        xn->ensure_grad();
        wn->ensure_grad();
        bn->ensure_grad();
        for (int in = 0; in < xv.n; ++in) {
            const double* xp = &xv.v[static_cast<size_t>(in) * in_d];
            double* xg = &xn->grad.v[static_cast<size_t>(in) * in_d];
            for (int od = 0; od < out_d; ++od) {
                double go = g.v[static_cast<size_t>(in) * out_d + od];
                if (go == 0.0) continue;
                bn->grad.v[static_cast<size_t>(od)] += go;
                const double* wp = &wv.v[static_cast<size_t>(od) * in_d];
                double* wg = &wn->grad.v[static_cast<size_t>(od) * in_d];
                for (int id = 0; id < in_d; ++id) {
                    xg[id] += go * wp[id];
                    wg[id] += go * xp[id];
                }
            }
        }
    });
}

Var leaky_relu(const Var& x, double slope) {
    Tensor out = x.value();
    for (double& v : out.v)
        if (v < 0) v *= slope;
    auto xn = x.node();
    return attach(std::move(out), {&x}, [xn, slope](VarNode& o) {
        xn->ensure_grad();
        for (size_t i = 0; i < o.grad.v.size(); ++i)
            xn->grad.v[i] += o.grad.v[i] * (xn->value.v[i] < 0 ? slope : 1.0);
    });
}

Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.v) v = 1.0 / (1.0 + std::exp(-v));
    auto xn = x.node();
    return attach(std::move(out), {&x}, [xn](VarNode& o) {
        xn->ensure_grad();
        for (size_t i = 0; i < o.grad.v.size(); ++i) {
            double y = o.value.v[i];
            xn->grad.v[i] += o.grad.v[i] * y * (1.0 - y);
        }
    });
}

Var upsample2(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out = Tensor::zeros(xv.n, xv.c, xv.h * 2, xv.w * 2);
    for (int in = 0; in < xv.n; ++in)
        for (int ic = 0; ic < xv.c; ++ic)
            for (int y = 0; y < out.h; ++y)
                for (int xx = 0; xx < out.w; ++xx)
                    out.at(in, ic, y, xx) = xv.at(in, ic, y / 2, xx / 2);
    auto xn = x.node();
    return attach(std::move(out), {&x}, [xn](VarNode& o) {
        xn->ensure_grad();
        for (int in = 0; in < o.grad.n; ++in)
            for (int ic = 0; ic < o.grad.c; ++ic)
                for (int y = 0; y < o.grad.h; ++y)
                    for (int xx = 0; xx < o.grad.w; ++xx)
                        xn->grad.at(in, ic, y / 2, xx / 2) += o.grad.at(in, ic, y, xx);
    });
}

Var concat_c(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.n != bv.n || av.h != bv.h || av.w != bv.w)
        fail(ErrorCode::ShapeMismatch, "concat_c spatial/batch mismatch");
    Tensor out = Tensor::zeros(av.n, av.c + bv.c, av.h, av.w);
    for (int in = 0; in < av.n; ++in) {
        for (int ic = 0; ic < av.c; ++ic)
            for (int y = 0; y < av.h; ++y)
                for (int xx = 0; xx < av.w; ++xx) out.at(in, ic, y, xx) = av.at(in, ic, y, xx);
        for (int ic = 0; ic < bv.c; ++ic)
            for (int y = 0; y < bv.h; ++y)
                for (int xx = 0; xx < bv.w; ++xx)
                    out.at(in, av.c + ic, y, xx) = bv.at(in, ic, y, xx);
    }
    auto an = a.node();
    auto bn = b.node();
    int ac = av.c;
    return attach(std::move(out), {&a, &b}, [an, bn, ac](VarNode& o) {
        an->ensure_grad();
        bn->ensure_grad();
        for (int in = 0; in < o.grad.n; ++in) {
            for (int ic = 0; ic < ac; ++ic)
                for (int y = 0; y < o.grad.h; ++y)
                    for (int xx = 0; xx < o.grad.w; ++xx)
                        an->grad.at(in, ic, y, xx) += o.grad.at(in, ic, y, xx);
            for (int ic = ac; ic < o.grad.c; ++ic)
                for (int y = 0; y < o.grad.h; ++y)
                    for (int xx = 0; xx < o.grad.w; ++xx)
                        bn->grad.at(in, ic - ac, y, xx) += o.grad.at(in, ic, y, xx);
        }
    });
}

Var reshape(const Var& x, int c, int h, int w) {
    const Tensor& xv = x.value();
    if (static_cast<size_t>(c) * h * w != static_cast<size_t>(xv.c) * xv.h * xv.w)
        fail(ErrorCode::ShapeMismatch, "reshape element count mismatch");
    Tensor out;
    out.n = xv.n;
    out.c = c;
    out.h = h;
    out.w = w;
    out.v = xv.v;
    auto xn = x.node();
    return attach(std::move(out), {&x}, [xn](VarNode& o) {
        xn->ensure_grad();
        for (size_t i = 0; i < o.grad.v.size(); ++i) xn->grad.v[i] += o.grad.v[i];
    });
}

Var mirror_w(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out = Tensor::zeros(xv.n, xv.c, xv.h, xv.w);
    for (int in = 0; in < xv.n; ++in)
        for (int ic = 0; ic < xv.c; ++ic)
            for (int y = 0; y < xv.h; ++y)
                for (int xx = 0; xx < xv.w; ++xx)
                    out.at(in, ic, y, xx) = xv.at(in, ic, y, xv.w - 1 - xx);
    auto xn = x.node();
    return attach(std::move(out), {&x}, [xn](VarNode& o) {
        xn->ensure_grad();
        for (int in = 0; in < o.grad.n; ++in)
            for (int ic = 0; ic < o.grad.c; ++ic)
                for (int y = 0; y < o.grad.h; ++y)
                    for (int xx = 0; xx < o.grad.w; ++xx)
                        xn->grad.at(in, ic, y, o.grad.w - 1 - xx) += o.grad.at(in, ic, y, xx);
    });
}

Var l1(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) fail(ErrorCode::ShapeMismatch, "l1 shape mismatch");
    Tensor out = Tensor::zeros(1, 1, 1, 1);
    double acc = 0;
    for (size_t i = 0; i < av.v.size(); ++i) acc += std::abs(av.v[i] - bv.v[i]);
    out.v[0] = acc / static_cast<double>(av.v.size());
    auto an = a.node();
    auto bn = b.node();
    return attach(std::move(out), {&a, &b}, [an, bn](VarNode& o) {
        an->ensure_grad();
        bn->ensure_grad();
        double g = o.grad.v[0] / static_cast<double>(an->value.v.size());
        for (size_t i = 0; i < an->value.v.size(); ++i) {
            double d = an->value.v[i] - bn->value.v[i];
            double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            an->grad.v[i] += g * s;
            bn->grad.v[i] -= g * s;
        }
    });
}

Var add(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) fail(ErrorCode::ShapeMismatch, "add shape mismatch");
    Tensor out = av;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += bv.v[i];
    auto an = a.node();
    auto bn = b.node();
    return attach(std::move(out), {&a, &b}, [an, bn](VarNode& o) {
        an->ensure_grad();
        bn->ensure_grad();
        for (size_t i = 0; i < o.grad.v.size(); ++i) {
            an->grad.v[i] += o.grad.v[i];
            bn->grad.v[i] += o.grad.v[i];
        }
    });
}

Var scale(const Var& x, double k) {
    Tensor out = x.value();
    for (double& v : out.v) v *= k;
    auto xn = x.node();
    return attach(std::move(out), {&x}, [xn, k](VarNode& o) {
        xn->ensure_grad();
        for (size_t i = 0; i < o.grad.v.size(); ++i) xn->grad.v[i] += o.grad.v[i] * k;
    });
}

void backward(const Var& loss) {
    if (loss.value().size() != 1) fail(ErrorCode::ShapeMismatch, "backward needs a scalar");
    if (!loss.requires_grad()) return;

    // Topological order by iterative DFS, then reverse sweep.
    std::vector<VarNode*> order;
    std::unordered_set<VarNode*> seen;
    std::vector<std::pair<VarNode*, size_t>> stack;
    stack.push_back({loss.node().get(), 0});
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            VarNode* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second)
                stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad.v[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) {
            (*it)->ensure_grad();
            (*it)->backward_fn();
        }
}

// ---- init and optimizer ----------------------------------------------

Tensor he_init(int n, int c, int h, int w, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(n, c, h, w);
    double sd = std::sqrt(2.0 / fan_in);
    for (double& v : t.v) v = rng.normal() * sd;
    return t;
}

Adam::Adam(std::vector<Var> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    for (Var& p : params_) {
        const Tensor& t = p.value();
        m_.push_back(Tensor::zeros(t.n, t.c, t.h, t.w));
        v_.push_back(Tensor::zeros(t.n, t.c, t.h, t.w));
    }
}

void Adam::zero_grad() {
    for (Var& p : params_) {
        Tensor& g = p.grad();
        std::fill(g.v.begin(), g.v.end(), 0.0);
    }
}

void Adam::step() {
    ++step_;
    double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& value = params_[i].value();
        Tensor& grad = params_[i].grad();
        for (size_t j = 0; j < value.v.size(); ++j) {
            double g = grad.v[j];
            m_[i].v[j] = config_.beta1 * m_[i].v[j] + (1.0 - config_.beta1) * g;
            v_[i].v[j] = config_.beta2 * v_[i].v[j] + (1.0 - config_.beta2) * g * g;
            double mhat = m_[i].v[j] / bc1;
            double vhat = v_[i].v[j] / bc2;
            value.v[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

}  // namespace psmlab::nn
