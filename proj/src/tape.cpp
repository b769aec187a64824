#include "cdml/tape.hpp"

#include <cmath>
#include <sstream>

#include "cdml/kernels.hpp"

namespace cdml {

namespace k = kernels;

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

namespace {

[[noreturn]] void shape_fail(const char* op, const std::vector<int>& a, const std::vector<int>& b) {
    fail(std::string("tape: ") + op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void require_same_shape(const char* op, const std::vector<int>& a, const std::vector<int>& b) {
    if (a != b) shape_fail(op, a, b);
}

}  // namespace

int Tape::push(Node n) {
    n.grad = Tensor(n.value.shape);
    nodes_.push_back(std::move(n));
    forward_done_ = false;
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::add_input(const std::string& name, std::vector<int> shape) {
    require(!by_name_.count(name), "tape: duplicate node name '" + name + "'");
    Node n;
    n.op = Op::input;
    n.name = name;
    n.value = Tensor(std::move(shape));
    int id = push(std::move(n));
    by_name_[name] = id;
    return id;
}

int Tape::add_param(const std::string& name, Tensor init) {
    require(!by_name_.count(name), "tape: duplicate node name '" + name + "'");
    Node n;
    n.op = Op::param;
    n.name = name;
    n.value = std::move(init);
    int id = push(std::move(n));
    by_name_[name] = id;
    params_.push_back(id);
    return id;
}

int Tape::matmul(int a, int b) {
    const auto& sa = nodes_[a].value.shape;
    const auto& sb = nodes_[b].value.shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_fail("matmul", sa, sb);
    Node n;
    n.op = Op::matmul;
    n.in = {a, b};
    n.value = Tensor({sa[0], sb[1]});
    return push(std::move(n));
}

int Tape::add_bias(int a, int bias) {
    const auto& sa = nodes_[a].value.shape;
    const auto& sb = nodes_[bias].value.shape;
    if (sa.size() != 2 || sb.size() != 1 || sb[0] != sa[1]) shape_fail("add_bias", sa, sb);
    Node n;
    n.op = Op::add_bias;
    n.in = {a, bias};
    n.value = Tensor(sa);
    return push(std::move(n));
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::relu;
    n.in = {a};
    n.value = Tensor(nodes_[a].value.shape);
    return push(std::move(n));
}

int Tape::abs(int a) {
    Node n;
    n.op = Op::abs;
    n.in = {a};
    n.value = Tensor(nodes_[a].value.shape);
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    require_same_shape("sub", nodes_[a].value.shape, nodes_[b].value.shape);
    Node n;
    n.op = Op::sub;
    n.in = {a, b};
    n.value = Tensor(nodes_[a].value.shape);
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    require_same_shape("mul", nodes_[a].value.shape, nodes_[b].value.shape);
    Node n;
    n.op = Op::mul;
    n.in = {a, b};
    n.value = Tensor(nodes_[a].value.shape);
    return push(std::move(n));
}

int Tape::square(int a) {
    Node n;
    n.op = Op::square;
    n.in = {a};
    n.value = Tensor(nodes_[a].value.shape);
    return push(std::move(n));
}

int Tape::squeeze(int a) {
    const auto& sa = nodes_[a].value.shape;
    if (sa.size() != 2 || sa[1] != 1) shape_fail("squeeze", sa, {1});
    Node n;
    n.op = Op::squeeze;
    n.in = {a};
    n.value = Tensor({sa[0]});
    return push(std::move(n));
}

int Tape::mean(int a) {
    Node n;
    n.op = Op::mean;
    n.in = {a};
    n.value = Tensor(std::vector<int>{});
    return push(std::move(n));
}

int Tape::combine(std::vector<int> scalars, Vec coeffs) {
    require(scalars.size() == coeffs.size() && !scalars.empty(),
            "tape: combine: needs matching nonempty terms and coefficients");
    for (int id : scalars)
        if (!nodes_[id].value.is_scalar()) shape_fail("combine", nodes_[id].value.shape, {});
    Node n;
    n.op = Op::combine;
    n.in = std::move(scalars);
    n.coeffs = std::move(coeffs);
    n.value = Tensor(std::vector<int>{});
    return push(std::move(n));
}

int Tape::dropout(int a, double keep_prob) {
    require(keep_prob > 0.0 && keep_prob <= 1.0, "tape: dropout: keep_prob must be in (0,1]");
    Node n;
    n.op = Op::dropout;
    n.in = {a};
    n.value = Tensor(nodes_[a].value.shape);
    n.keep_prob = keep_prob;
    n.mask.assign(n.value.size(), 1.0);
    return push(std::move(n));
}

void Tape::set_input(const std::string& name, std::span<const double> values) {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), "tape: unknown input '" + name + "'");
    Node& n = nodes_[it->second];
    require(n.op == Op::input, "tape: node '" + name + "' is not an input");
    if (values.size() != n.value.size())
        fail("tape: input '" + name + "': got " + std::to_string(values.size()) + " values for shape " +
             shape_str(n.value.shape));
    std::copy(values.begin(), values.end(), n.value.v.begin());
    forward_done_ = false;
}

void Tape::forward() {
    for (Node& n : nodes_) {
        const size_t cnt = n.value.size();
        switch (n.op) {
            case Op::input:
            case Op::param:
                break;
            case Op::matmul: {
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                k::matmul(a.v.data(), b.v.data(), n.value.v.data(), a.shape[0], a.shape[1], b.shape[1]);
                break;
            }
            case Op::add_bias: {
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                k::add_bias(a.v.data(), b.v.data(), n.value.v.data(), a.shape[0], a.shape[1]);
                break;
            }
            case Op::relu:
                k::relu(nodes_[n.in[0]].value.v.data(), n.value.v.data(), cnt);
                break;
            case Op::abs:
                k::vabs(nodes_[n.in[0]].value.v.data(), n.value.v.data(), cnt);
                break;
            case Op::sub:
                k::vsub(nodes_[n.in[0]].value.v.data(), nodes_[n.in[1]].value.v.data(), n.value.v.data(), cnt);
                break;
            case Op::mul:
                k::vmul(nodes_[n.in[0]].value.v.data(), nodes_[n.in[1]].value.v.data(), n.value.v.data(), cnt);
                break;
            case Op::square:
                k::vsquare(nodes_[n.in[0]].value.v.data(), n.value.v.data(), cnt);
                break;
            case Op::squeeze:
                n.value.v = nodes_[n.in[0]].value.v;
                break;
            case Op::mean:
                n.value.v[0] = k::mean(nodes_[n.in[0]].value.v);
                break;
            case Op::combine: {
                double s = 0.0;
                for (size_t t = 0; t < n.in.size(); ++t) s += n.coeffs[t] * nodes_[n.in[t]].value.v[0];
                n.value.v[0] = s;
                break;
            }
            case Op::dropout: {
                const Tensor& a = nodes_[n.in[0]].value;
                if (training_) {
                    const double inv = 1.0 / n.keep_prob;
                    for (size_t i = 0; i < cnt; ++i) n.mask[i] = rng_.uniform() < n.keep_prob ? inv : 0.0;
                    k::vmul(a.v.data(), n.mask.data(), n.value.v.data(), cnt);
                } else {
                    n.value.v = a.v;
                }
                break;
            }
        }
    }
    forward_done_ = true;
}

void Tape::backward(int scalar_node) {
    require(forward_done_, "tape: backward called before forward");
    require(scalar_node >= 0 && scalar_node < static_cast<int>(nodes_.size()), "tape: backward: bad node id");
    require(nodes_[scalar_node].value.is_scalar(), "tape: backward target must be a scalar, got shape " +
                                                       shape_str(nodes_[scalar_node].value.shape));
    for (Node& n : nodes_) std::fill(n.grad.v.begin(), n.grad.v.end(), 0.0);
    nodes_[scalar_node].grad.v[0] = 1.0;

    for (int id = scalar_node; id >= 0; --id) {
        Node& n = nodes_[id];
        const Vec& g = n.grad.v;
        switch (n.op) {
            case Op::input:
            case Op::param:
                break;
            case Op::matmul: {
                const Tensor& a = nodes_[n.in[0]].value;
                const Tensor& b = nodes_[n.in[1]].value;
                const int rows = a.shape[0], inner = a.shape[1], colsb = b.shape[1];
                k::matmul_acc_nt(g.data(), b.v.data(), nodes_[n.in[0]].grad.v.data(), rows, inner, colsb);
                k::matmul_acc_tn(a.v.data(), g.data(), nodes_[n.in[1]].grad.v.data(), rows, inner, colsb);
                break;
            }
            case Op::add_bias: {
                const Tensor& a = nodes_[n.in[0]].value;
                k::axpy(1.0, g.data(), nodes_[n.in[0]].grad.v.data(), g.size());
                k::bias_grad_acc(g.data(), nodes_[n.in[1]].grad.v.data(), a.shape[0], a.shape[1]);
                break;
            }
            case Op::relu:
                k::relu_grad_acc(nodes_[n.in[0]].value.v.data(), g.data(), nodes_[n.in[0]].grad.v.data(), g.size());
                break;
            case Op::abs: {
                // subgradient 0 at x = 0
                const Vec& x = nodes_[n.in[0]].value.v;
                Vec& dx = nodes_[n.in[0]].grad.v;
                for (size_t i = 0; i < g.size(); ++i)
                    dx[i] += x[i] > 0.0 ? g[i] : (x[i] < 0.0 ? -g[i] : 0.0);
                break;
            }
            case Op::sub: {
                k::axpy(1.0, g.data(), nodes_[n.in[0]].grad.v.data(), g.size());
                k::axpy(-1.0, g.data(), nodes_[n.in[1]].grad.v.data(), g.size());
                break;
            }
            case Op::mul: {
                const Vec& a = nodes_[n.in[0]].value.v;
                const Vec& b = nodes_[n.in[1]].value.v;
                Vec& da = nodes_[n.in[0]].grad.v;
                Vec& db = nodes_[n.in[1]].grad.v;
                for (size_t i = 0; i < g.size(); ++i) {
                    da[i] += g[i] * b[i];
                    db[i] += g[i] * a[i];
                }
                break;
            }
            case Op::square: {
                const Vec& x = nodes_[n.in[0]].value.v;
                Vec& dx = nodes_[n.in[0]].grad.v;
                for (size_t i = 0; i < g.size(); ++i) dx[i] += 2.0 * x[i] * g[i];
                break;
            }
            case Op::squeeze:
                k::axpy(1.0, g.data(), nodes_[n.in[0]].grad.v.data(), g.size());
                break;
            case Op::mean: {
                const double gv = g[0] / static_cast<double>(nodes_[n.in[0]].value.size());
                Vec& dx = nodes_[n.in[0]].grad.v;
                for (double& d : dx) d += gv;
                break;
            }
            case Op::combine:
                for (size_t t = 0; t < n.in.size(); ++t) nodes_[n.in[t]].grad.v[0] += n.coeffs[t] * g[0];
                break;
            case Op::dropout: {
                Vec& dx = nodes_[n.in[0]].grad.v;
                if (training_) {
                    for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * n.mask[i];
                } else {
                    k::axpy(1.0, g.data(), dx.data(), g.size());
                }
                break;
            }
        }
    }
}

Tensor& Tape::param_value(int id) {
    require(nodes_[id].op == Op::param, "tape: node is not a parameter");
    return nodes_[id].value;
}

Tensor& Tape::param_grad(int id) {
    require(nodes_[id].op == Op::param, "tape: node is not a parameter");
    return nodes_[id].grad;
}

std::vector<Tensor*> Tape::param_grads() {
    std::vector<Tensor*> out;
    out.reserve(params_.size());
    for (int id : params_) out.push_back(&nodes_[id].grad);
    return out;
}

std::map<std::string, Tensor> Tape::named_param_grads() const {
    std::map<std::string, Tensor> out;
    for (int id : params_) out[nodes_[id].name] = nodes_[id].grad;
    return out;
}

double clip_global_norm(std::span<Tensor*> grads, double max_norm) {
    require(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (const Tensor* t : grads)
        for (double x : t->v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Tensor* t : grads) kernels::vscale(scale, t->v.data(), t->v.size());
    }
    return norm;
}

double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm) {
    std::vector<Tensor*> ptrs;
    ptrs.reserve(grads.size());
    for (auto& [_, t] : grads) ptrs.push_back(&t);
    return clip_global_norm(std::span<Tensor*>(ptrs), max_norm);
}

}  // namespace cdml
