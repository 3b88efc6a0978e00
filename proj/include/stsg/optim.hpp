#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stsg/tensor.hpp"

namespace stsg {

enum class Init { Zeros, Ones, XavierUniform };

// Named trainable tensors, ordered by name. Parameter seeds derive from
// (store seed, name hash) so creation order never affects initial values.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    Tensor create(const std::string& name, Shape shape, Init init);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    const std::map<std::string, Tensor>& items() const { return params_; }
    std::map<std::string, Tensor>& items() { return params_; }
    std::size_t tensor_count() const { return params_.size(); }
    std::size_t scalar_count() const;
    std::uint64_t seed() const { return seed_; }

    void zero_grads();

private:
    std::uint64_t seed_;
    std::map<std::string, Tensor> params_;
};

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// Adam with bias correction and decoupled weight decay (theta -= lr*wd*theta
// before the moment-based update). Grads are zeroed after each step.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& params);
    std::size_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::size_t step_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

}  // namespace stsg
