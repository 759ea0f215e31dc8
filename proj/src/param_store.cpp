#include "cmfuse/param_store.hpp"

#include <cmath>
#include <cstring>

#include "cmfuse/error.hpp"

namespace cmfuse {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name) != 0) throw invariant_error("ParamStore: duplicate parameter " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor(init.rows(), init.cols());
    e.m = Tensor(init.rows(), init.cols());
    e.v = Tensor(init.rows(), init.cols());
    e.value = std::move(init);
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
    return entries_.back().value;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

ParamStore::Entry& ParamStore::find(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw invariant_error("ParamStore: unknown parameter " + name);
    return entries_[it->second];
}

const ParamStore::Entry& ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw invariant_error("ParamStore: unknown parameter " + name);
    return entries_[it->second];
}

Tensor& ParamStore::value(const std::string& name) { return find(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return find(name).value; }
const Tensor& ParamStore::grad(const std::string& name) const { return find(name).grad; }

void ParamStore::zero_grad() {
    for (auto& e : entries_) {
        e.grad.fill(0.0);
        e.grad_live = false;
    }
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g, double scale) {
    Entry& e = find(name);
    if (!e.grad.same_shape(g)) {
        throw invariant_error("ParamStore: gradient shape mismatch for " + name);
    }
    e.grad.axpy(scale, g);
    e.grad_live = true;
}

void ParamStore::adam_step(const AdamConfig& cfg) {
    for (const auto& e : entries_) {
        if (!e.grad_live) {
            throw invariant_error("adam_step: missing gradient for parameter " + e.name);
        }
    }
    step_ += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& e : entries_) {
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
            e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            // Decoupled weight decay: applied to the weight, not the moments.
            e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps) + cfg.lr * cfg.weight_decay * e.value[i];
        }
    }
    zero_grad();
}

std::size_t ParamStore::coordinate_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

std::pair<std::size_t, std::size_t> ParamStore::locate(std::size_t coord) const {
    for (std::size_t k = 0; k < entries_.size(); ++k) {
        if (coord < entries_[k].value.size()) return {k, coord};
        coord -= entries_[k].value.size();
    }
    throw invariant_error("ParamStore: coordinate out of range");
}

double ParamStore::get_coordinate(std::size_t i) const {
    auto [k, off] = locate(i);
    return entries_[k].value[off];
}

void ParamStore::set_coordinate(std::size_t i, double v) {
    auto [k, off] = locate(i);
    entries_[k].value[off] = v;
}

double ParamStore::grad_coordinate(std::size_t i) const {
    auto [k, off] = locate(i);
    return entries_[k].grad[off];
}

std::uint64_t ParamStore::value_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& e : entries_) {
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double v = e.value[i];
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    }
    return h;
}

Var ParamBinding::use(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const Tensor& val = cstore_->value(name);
    Var v = trainable_ ? tape_->variable_ref(&val) : tape_->constant_ref(&val);
    bound_.emplace_back(name, v);
    cache_.emplace(name, v);
    return v;
}

void ParamBinding::accumulate(double scale) {
    if (!trainable_ || store_ == nullptr) {
        throw invariant_error("ParamBinding: accumulate needs a trainable mutable binding");
    }
    for (const auto& [name, var] : bound_) {
        store_->accumulate_grad(name, tape_->grad(var), scale);
    }
}

std::vector<std::pair<std::string, Tensor>> ParamBinding::extract_grads() {
    if (!trainable_) throw invariant_error("ParamBinding: extract_grads on non-trainable binding");
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(bound_.size());
    for (const auto& [name, var] : bound_) {
        out.emplace_back(name, tape_->grad(var));
    }
    return out;
}

}  // namespace cmfuse
