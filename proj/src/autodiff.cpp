#include "aide/autodiff.hpp"

#include <cmath>

namespace aide {

ParamEntry& ParamSet::add(const std::string& name, Tensor4 init) {
    if (contains(name)) throw StateError("ParamSet: duplicate parameter '" + name + "'");
    entries_.emplace_back(name, ParamEntry(std::move(init)));
    return entries_.back().second;
}

ParamEntry& ParamSet::at(const std::string& name) {
    for (auto& [n, e] : entries_)
        if (n == name) return e;
    throw StateError("ParamSet: unknown parameter '" + name + "'");
}

const ParamEntry& ParamSet::at(const std::string& name) const {
    for (const auto& [n, e] : entries_)
        if (n == name) return e;
    throw StateError("ParamSet: unknown parameter '" + name + "'");
}

bool ParamSet::contains(const std::string& name) const {
    for (const auto& [n, e] : entries_)
        if (n == name) return true;
    return false;
}

size_t ParamSet::param_count() const {
    size_t total = 0;
    for (const auto& [n, e] : entries_) total += e.weights.size();
    return total;
}

void ParamSet::zero_gradients() {
    for (auto& [n, e] : entries_) e.gradient.fill(0.0);
}

Tape::NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::Node& Tape::node(NodeId id) {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
        throw StateError("Tape: invalid node id " + std::to_string(id));
    return nodes_[id];
}

Tape::NodeId Tape::input(Tensor4 value) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    return push(std::move(n));
}

Tape::NodeId Tape::param(ParamSet& params, const std::string& name) {
    Node n;
    n.op = Op::leaf;
    n.param = &params.at(name);
    n.value = n.param->weights; // copy; weights may only change via adam_step
    n.requires_grad = true;
    return push(std::move(n));
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId kernel, NodeId bias, int stride, int padding) {
    Node n;
    n.op = Op::conv;
    n.a = x;
    n.b = kernel;
    n.c = bias;
    n.stride = stride;
    n.padding = padding;
    n.value = conv2d_forward(node(x).value, node(kernel).value,
                             bias >= 0 ? node(bias).value : Tensor4(), stride, padding, prec_);
    n.requires_grad = node(x).requires_grad || node(kernel).requires_grad ||
                      (bias >= 0 && node(bias).requires_grad);
    return push(std::move(n));
}

Tape::NodeId Tape::deconv2d(NodeId x, NodeId kernel, NodeId bias, int stride, int padding) {
    Node n;
    n.op = Op::deconv;
    n.a = x;
    n.b = kernel;
    n.c = bias;
    n.stride = stride;
    n.padding = padding;
    n.value = deconv2d_forward(node(x).value, node(kernel).value,
                               bias >= 0 ? node(bias).value : Tensor4(), stride, padding, prec_);
    n.requires_grad = node(x).requires_grad || node(kernel).requires_grad ||
                      (bias >= 0 && node(bias).requires_grad);
    return push(std::move(n));
}

Tape::NodeId Tape::relu(NodeId x) {
    Node n;
    n.op = Op::relu;
    n.a = x;
    n.value = relu_forward(node(x).value);
    n.requires_grad = node(x).requires_grad;
    return push(std::move(n));
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    Node n;
    n.op = Op::add;
    n.a = a;
    n.b = b;
    n.value = aide::add(node(a).value, node(b).value);
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(n));
}

Tape::NodeId Tape::mse(NodeId pred, NodeId target) {
    Node n;
    n.op = Op::mse;
    n.a = pred;
    n.b = target;
    n.value = Tensor4(1, 1, 1, 1);
    n.value.data[0] = mse_forward(node(pred).value, node(target).value);
    n.requires_grad = node(pred).requires_grad || node(target).requires_grad;
    return push(std::move(n));
}

const Tensor4& Tape::value(NodeId id) const {
    return const_cast<Tape*>(this)->node(id).value;
}

double Tape::scalar(NodeId id) const {
    const Tensor4& v = value(id);
    if (v.size() != 1) throw StateError("Tape: node is not a scalar");
    return v.data[0];
}

void Tape::accumulate(Node& dst, const Tensor4& g) {
    if (dst.grad.empty()) {
        dst.grad = g;
        return;
    }
    for (size_t i = 0; i < dst.grad.size(); ++i) dst.grad.data[i] += g.data[i];
}

void Tape::backward(NodeId loss) {
    if (nodes_.empty()) throw StateError("Tape: backward called before any forward pass");
    Node& root = node(loss);
    if (root.value.size() != 1) throw StateError("Tape: backward root must be a scalar node");
    if (!std::isfinite(root.value.data[0]))
        throw NumericError("Tape: loss is not finite (" + std::to_string(root.value.data[0]) +
                           ")");

    root.grad = Tensor4(1, 1, 1, 1);
    root.grad.data[0] = 1.0;

    // node ids are topologically ordered by construction
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue; // not on a path to the loss
        switch (n.op) {
            case Op::leaf:
                break;
            case Op::conv: {
                Node& x = nodes_[n.a];
                Node& k = nodes_[n.b];
                if (x.requires_grad)
                    accumulate(x, conv2d_backward_input(n.grad, k.value, n.stride, n.padding,
                                                        x.value.h(), x.value.w(), prec_));
                if (k.requires_grad)
                    accumulate(k, conv2d_backward_kernel(n.grad, x.value, k.value.h(),
                                                         k.value.w(), n.stride, n.padding,
                                                         prec_));
                if (n.c >= 0 && nodes_[n.c].requires_grad)
                    accumulate(nodes_[n.c], channel_sum(n.grad));
                break;
            }
            case Op::deconv: {
                Node& x = nodes_[n.a];
                Node& k = nodes_[n.b];
                if (x.requires_grad)
                    accumulate(x, deconv2d_backward_input(n.grad, k.value, n.stride, n.padding,
                                                          prec_));
                if (k.requires_grad)
                    accumulate(k, deconv2d_backward_kernel(n.grad, x.value, k.value.h(),
                                                           k.value.w(), n.stride, n.padding,
                                                           prec_));
                if (n.c >= 0 && nodes_[n.c].requires_grad)
                    accumulate(nodes_[n.c], channel_sum(n.grad));
                break;
            }
            case Op::relu:
                if (nodes_[n.a].requires_grad)
                    accumulate(nodes_[n.a], relu_backward(n.grad, nodes_[n.a].value));
                break;
            case Op::add:
                if (nodes_[n.a].requires_grad) accumulate(nodes_[n.a], n.grad);
                if (nodes_[n.b].requires_grad) accumulate(nodes_[n.b], n.grad);
                break;
            case Op::mse:
                if (nodes_[n.a].requires_grad)
                    accumulate(nodes_[n.a], mse_backward_pred(nodes_[n.a].value,
                                                              nodes_[n.b].value,
                                                              n.grad.data[0]));
                break;
        }
    }

    for (Node& n : nodes_)
        if (n.param && !n.grad.empty())
            for (size_t i = 0; i < n.grad.size(); ++i) n.param->gradient.data[i] += n.grad.data[i];

    clear();
}

void Tape::clear() { nodes_.clear(); }

} // namespace aide
