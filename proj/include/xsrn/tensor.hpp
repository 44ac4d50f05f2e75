#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace xsrn {

// Rank-4 NCHW shape. All tensors in the library are rank 4; vectors and
// scalars are carried as degenerate shapes ({1,C,1,1}, {1,1,1,1}).
struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape4&) const = default;
    std::string str() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + "]";
    }
};

template <typename T>
struct TensorNode {
    Shape4 shape;
    std::vector<T> values;
    std::vector<T> grad;   // empty unless requires_grad or touched by backward
    bool requires_grad = false;
    std::uint64_t tape_id = 0;  // last tape that produced this node as an op output
};

// Shared-ownership handle over a TensorNode. Copies alias the same storage;
// ops always return freshly allocated nodes, so produced values are immutable
// unless explicitly written through mutable_values() (optimizer updates).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape4 shape, T fill = T(0))
        : node_(std::make_shared<TensorNode<T>>()) {
        if (shape.n <= 0 || shape.c <= 0 || shape.h <= 0 || shape.w <= 0)
            throw std::invalid_argument("Tensor: non-positive dimension in shape " + shape.str());
        node_->shape = shape;
        node_->values.assign(shape.numel(), fill);
    }

    static Tensor from_values(Shape4 shape, std::vector<T> values) {
        Tensor t(shape);
        if (values.size() != shape.numel())
            throw std::invalid_argument("Tensor: data length " + std::to_string(values.size()) +
                                        " does not match shape " + shape.str());
        t.node_->values = std::move(values);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape4& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->values.size(); }

    const std::vector<T>& values() const { return node_->values; }
    std::vector<T>& mutable_values() { return node_->values; }

    T at(int n, int c, int h, int w) const { return node_->values[index(n, c, h, w)]; }
    T& at(int n, int c, int h, int w) { return node_->values[index(n, c, h, w)]; }

    std::size_t index(int n, int c, int h, int w) const {
        const Shape4& s = node_->shape;
        return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
    }

    // Scalar access; valid only for 1-element tensors.
    T value() const {
        if (numel() != 1)
            throw std::invalid_argument("Tensor::value: tensor is not scalar, shape " + shape().str());
        return node_->values[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) {
        node_->requires_grad = on;
        if (on && node_->grad.size() != node_->values.size())
            node_->grad.assign(node_->values.size(), T(0));
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (node_->grad.empty())
            throw std::logic_error("Tensor::grad: gradient has not been populated");
        return node_->grad;
    }
    std::vector<T>& mutable_grad() {
        ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->values.size(), T(0)); }
    void ensure_grad() {
        if (node_->grad.size() != node_->values.size())
            node_->grad.assign(node_->values.size(), T(0));
    }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

// Reverse-mode tape. One tape drives one training step: ops executed while a
// Tape is active record their backward rules, and backward() replays them in
// reverse order. Inference without an active tape records nothing.
//
// The tape is single-writer; activation is per thread of control.
template <typename T>
class Tape {
public:
    Tape() : id_(next_id()++), previous_(active_), entries_() { active_ = this; }
    ~Tape() { active_ = previous_; }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() { return active_; }
    std::uint64_t id() const { return id_; }

    // True when `t` participates in gradient flow on this tape.
    bool tracks(const Tensor<T>& t) const {
        return t.requires_grad() || t.node()->tape_id == id_;
    }

    void record(const std::shared_ptr<TensorNode<T>>& output, std::function<void()> backward_fn) {
        output->tape_id = id_;
        entries_.push_back({output, std::move(backward_fn)});
    }

    std::size_t size() const { return entries_.size(); }

    // Seeds d(loss)/d(loss)=1 and replays backward rules in reverse recording
    // order. Leaf gradients accumulate (callers zero them between steps);
    // intermediate gradients live on this tape's nodes and are reset here.
    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw std::invalid_argument("Tape::backward: loss must be scalar, got shape " + loss.shape().str());
        if (entries_.empty())
            throw std::logic_error("Tape::backward: tape is empty");
        if (loss.node()->tape_id != id_)
            throw std::logic_error("Tape::backward: loss was not produced on this tape");
        for (auto& e : entries_) {
            e.output->grad.assign(e.output->values.size(), T(0));
        }
        loss.node()->grad.assign(1, T(1));
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
            it->backward_fn();
    }

private:
    struct Entry {
        std::shared_ptr<TensorNode<T>> output;
        std::function<void()> backward_fn;
    };

    static std::uint64_t& next_id() {
        static std::uint64_t counter = 1;
        return counter;
    }

    std::uint64_t id_;
    Tape* previous_;
    std::vector<Entry> entries_;

    static inline thread_local Tape* active_ = nullptr;
};

}  // namespace xsrn
