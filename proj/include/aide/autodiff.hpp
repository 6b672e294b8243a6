#pragma once

#include <string>
#include <vector>

#include "aide/kernels.hpp"
#include "aide/tensor.hpp"

namespace aide {

/// One trainable tensor with its gradient and Adam state. All four share a
/// shape; adam_m / adam_v start at zero.
struct ParamEntry {
    Tensor4 weights;
    Tensor4 gradient;
    Tensor4 adam_m;
    Tensor4 adam_v;

    explicit ParamEntry(Tensor4 init)
        : weights(std::move(init)),
          gradient(Tensor4::zeros_like(weights)),
          adam_m(Tensor4::zeros_like(weights)),
          adam_v(Tensor4::zeros_like(weights)) {}
};

/// Named parameter collection with stable iteration order.
class ParamSet {
public:
    ParamEntry& add(const std::string& name, Tensor4 init);
    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    size_t size() const { return entries_.size(); }
    size_t param_count() const;
    void zero_gradients();

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::vector<std::pair<std::string, ParamEntry>> entries_;
};

/// Reverse-mode tape over the RED-CNN operator set. Record a forward pass,
/// call backward(loss) once; gradients accumulate into the ParamSet entries
/// and the tape clears itself.
class Tape {
public:
    using NodeId = int;

    explicit Tape(Precision prec = Precision::f64) : prec_(prec) {}

    NodeId input(Tensor4 value);
    NodeId param(ParamSet& params, const std::string& name);

    /// kernel node shape (out_ch, in_ch, kh, kw); bias node (1, out_ch, 1, 1) or -1.
    NodeId conv2d(NodeId x, NodeId kernel, NodeId bias, int stride, int padding);
    /// kernel node shape (in_ch, out_ch, kh, kw).
    NodeId deconv2d(NodeId x, NodeId kernel, NodeId bias, int stride, int padding);
    NodeId relu(NodeId x);
    NodeId add(NodeId a, NodeId b);
    /// Scalar node holding mean((pred - target)^2).
    NodeId mse(NodeId pred, NodeId target);

    const Tensor4& value(NodeId id) const;
    double scalar(NodeId id) const;

    /// Reverse pass from a scalar loss node. Throws StateError when no
    /// forward graph is recorded and NumericError when the loss is not
    /// finite. The graph is cleared afterwards.
    void backward(NodeId loss);

    void clear();
    bool empty() const { return nodes_.empty(); }
    size_t node_count() const { return nodes_.size(); }

private:
    enum class Op { leaf, conv, deconv, relu, add, mse };

    struct Node {
        Op op;
        int a = -1, b = -1, c = -1; // operands (x, kernel, bias) / (lhs, rhs)
        int stride = 1, padding = 0;
        Tensor4 value;
        Tensor4 grad;              // allocated lazily during backward
        ParamEntry* param = nullptr;
        bool requires_grad = false;
    };

    NodeId push(Node n);
    Node& node(NodeId id);
    void accumulate(Node& dst, const Tensor4& g);

    std::vector<Node> nodes_;
    Precision prec_;
};

} // namespace aide
