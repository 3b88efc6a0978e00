#include "stsg/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "stsg/errors.hpp"
#include "stsg/rng.hpp"

namespace stsg {

namespace {

// fan_in/fan_out by tensor role: rank 4 = conv kernel (Cout,Cin,kH,kW),
// rank 2 = linear / token matrix (Din,Dout).
std::pair<double, double> fans(const Shape& s) {
    if (s.size() == 4) {
        const double rf = static_cast<double>(s[2] * s[3]);
        return {static_cast<double>(s[1]) * rf, static_cast<double>(s[0]) * rf};
    }
    if (s.size() == 2) return {static_cast<double>(s[0]), static_cast<double>(s[1])};
    const double n = static_cast<double>(shape_numel(s));
    return {n, n};
}

}  // namespace

Tensor ParamStore::create(const std::string& name, Shape shape, Init init) {
    if (params_.count(name)) {
        throw std::invalid_argument("parameter name registered twice: " + name);
    }
    Tensor t(shape, 0.0, true);
    switch (init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            t = Tensor(shape, 1.0, true);
            break;
        case Init::XavierUniform: {
            auto [fan_in, fan_out] = fans(shape);
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            Rng rng(mix_seed(seed_, hash_name(name)));
            auto& d = t.mutable_data();
            for (double& v : d) v = rng.uniform(-limit, limit);
            break;
        }
    }
    params_.emplace(name, t);
    return t;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
}

void Adam::step(ParamStore& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, t] : params.items()) {
        if (!t.has_grad()) {
            throw NumericError("adam: parameter '" + name + "' has no gradient");
        }
        auto& mv = moments_[name];
        if (mv.first.empty()) {
            mv.first.assign(t.size(), 0.0);
            mv.second.assign(t.size(), 0.0);
        }
        auto& theta = t.mutable_data();
        const auto& g = t.grad();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (cfg_.weight_decay != 0.0) theta[i] -= cfg_.lr * cfg_.weight_decay * theta[i];
            double& m = mv.first[i];
            double& v = mv.second[i];
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g[i];
            v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        t.zero_grad();
    }
}

}  // namespace stsg
