#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdml/core.hpp"
#include "cdml/rng.hpp"

namespace cdml {

/// Dense tensor, row-major, rank 0..2 in practice.
struct Tensor {
    std::vector<int> shape;
    Vec v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), 0.0) {}
    Tensor(std::vector<int> s, Vec values) : shape(std::move(s)), v(std::move(values)) {}

    static size_t count(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) n *= static_cast<size_t>(d);
        return n;
    }
    size_t size() const { return v.size(); }
    bool is_scalar() const { return shape.empty(); }
    double scalar() const { return v[0]; }
};

std::string shape_str(const std::vector<int>& s);

/// Reverse-mode autodiff over a static graph. Operations are recorded once;
/// forward() re-executes the whole tape in topological (insertion) order and
/// backward() sweeps it in reverse, so buffers are reused across epochs.
///
/// A Tape is single-threaded; distinct tapes can run on different threads.
class Tape {
public:
    enum class Op : uint8_t {
        input,
        param,
        matmul,
        add_bias,
        relu,
        abs,
        sub,
        mul,
        square,
        squeeze,
        mean,
        combine,
        dropout,
    };

    int add_input(const std::string& name, std::vector<int> shape);
    int add_param(const std::string& name, Tensor init);

    int matmul(int a, int b);
    int add_bias(int a, int bias);
    int relu(int a);
    int abs(int a);
    int sub(int a, int b);
    int mul(int a, int b);
    int square(int a);
    int squeeze(int a);  // [n,1] -> [n]
    int mean(int a);     // -> scalar
    int combine(std::vector<int> scalars, Vec coeffs);
    int dropout(int a, double keep_prob);

    void set_input(const std::string& name, std::span<const double> values);
    void forward();
    /// Gradients of a scalar node w.r.t. every parameter; parameters the
    /// output does not depend on keep zero gradients.
    void backward(int scalar_node);

    const Tensor& value(int id) const { return nodes_[id].value; }
    const Tensor& grad(int id) const { return nodes_[id].grad; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    Op op_of(int id) const { return nodes_[id].op; }
    const std::vector<int>& inputs_of(int id) const { return nodes_[id].in; }
    Tensor& param_value(int id);
    Tensor& param_grad(int id);
    const std::vector<int>& param_ids() const { return params_; }
    std::vector<Tensor*> param_grads();
    std::map<std::string, Tensor> named_param_grads() const;

    /// Dropout masks are drawn from this stream each training-mode forward.
    void set_rng(uint64_t seed) { rng_ = Rng(seed); }
    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

private:
    struct Node {
        Op op;
        std::string name;  // inputs/params only
        std::vector<int> in;
        Tensor value;
        Tensor grad;
        Vec coeffs;             // combine
        double keep_prob = 1.0; // dropout
        Vec mask;               // dropout
    };

    int push(Node n);
    void check_built() const;

    std::vector<Node> nodes_;
    std::vector<int> params_;
    std::map<std::string, int> by_name_;
    Rng rng_{0};
    bool training_ = false;
    bool forward_done_ = false;
};

/// Scales all gradients by max_norm/g when the global L2 norm g exceeds
/// max_norm. Returns the pre-clip norm.
double clip_global_norm(std::span<Tensor*> grads, double max_norm);
double clip_global_norm(std::map<std::string, Tensor>& grads, double max_norm);

}  // namespace cdml
