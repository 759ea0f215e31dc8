#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmfuse/tape.hpp"
#include "cmfuse/tensor.hpp"

namespace cmfuse {

struct AdamConfig {
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

// Named parameter tensors with gradient accumulators and Adam state. One
// store is stepped as a unit: the step counter is shared by every parameter
// it holds. Never shared mutably across threads.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
        Tensor m;
        Tensor v;
        bool grad_live = false;
    };

    Tensor& add(const std::string& name, Tensor init);
    bool has(const std::string& name) const;
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    const Tensor& grad(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    Entry& entry(std::size_t i) { return entries_[i]; }
    const Entry& entry(std::size_t i) const { return entries_[i]; }

    void zero_grad();
    void accumulate_grad(const std::string& name, const Tensor& g, double scale);

    // AdamW update with bias correction; requires every parameter's gradient
    // to have been populated since the last step. Clears gradients after.
    void adam_step(const AdamConfig& cfg);

    std::int64_t step() const { return step_; }
    void set_step(std::int64_t s) { step_ = s; }

    // Flat coordinate view across all parameters, in registration order.
    std::size_t coordinate_count() const;
    double get_coordinate(std::size_t i) const;
    void set_coordinate(std::size_t i, double v);
    double grad_coordinate(std::size_t i) const;

    // Hash of all parameter values; used to assert phase isolation.
    std::uint64_t value_hash() const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;

    Entry& find(const std::string& name);
    const Entry& find(const std::string& name) const;
    std::pair<std::size_t, std::size_t> locate(std::size_t coord) const;

    std::int64_t step_ = 0;
};

// Inserts parameters of one store as leaves on a tape, preserving insertion
// order so gradient reduction is deterministic.
class ParamBinding {
public:
    ParamBinding(ParamStore& store, Tape& tape, bool trainable)
        : store_(&store), cstore_(&store), tape_(&tape), trainable_(trainable) {}

    // Read-only binding: every use() inserts a constant leaf.
    ParamBinding(const ParamStore& store, Tape& tape)
        : cstore_(&store), tape_(&tape), trainable_(false) {}

    // Trainable leaves over a store the binding may not mutate; gradients are
    // read back with extract_grads() only.
    static ParamBinding grad_only(const ParamStore& store, Tape& tape) {
        ParamBinding pb(store, tape);
        pb.trainable_ = true;
        return pb;
    }

    Var use(const std::string& name);

    // store.grad[name] += scale * tape_grad, in use() order.
    void accumulate(double scale);

    // Per-subject gradient snapshot in use() order, for ordered reduction
    // across threads.
    std::vector<std::pair<std::string, Tensor>> extract_grads();

private:
    ParamStore* store_ = nullptr;
    const ParamStore* cstore_ = nullptr;
    Tape* tape_;
    bool trainable_;
    std::vector<std::pair<std::string, Var>> bound_;
    std::unordered_map<std::string, Var> cache_;
};

}  // namespace cmfuse
