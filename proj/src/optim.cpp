#include "decompl/optim.hpp"

#include <cmath>
#include <string>

#include "decompl/errors.hpp"

namespace decompl {

AdamState::AdamState(const std::vector<Tensor>& params, double base_lr, AdamConfig cfg)
    : base_lr_(base_lr), cfg_(cfg) {
    if (base_lr <= 0.0) throw ConfigError("adam: base learning rate must be positive");
    if (cfg.beta1 <= 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 <= 0.0 || cfg.beta2 >= 1.0) {
        throw ConfigError("adam: betas must lie in (0, 1)");
    }
    if (cfg.epsilon <= 0.0) throw ConfigError("adam: epsilon must be positive");
    first_moment_.reserve(params.size());
    second_moment_.reserve(params.size());
    for (const auto& p : params) {
        first_moment_.emplace_back(p.size(), 0.0);
        second_moment_.emplace_back(p.size(), 0.0);
    }
}

void AdamState::step(std::vector<Tensor>& params, double lr) {
    if (params.size() != first_moment_.size()) {
        throw ContractError("adam: parameter list size changed since construction");
    }
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].requires_grad()) {
            throw ContractError("adam: parameter " + std::to_string(p) + " has no gradient buffer");
        }
        auto& m = first_moment_[p];
        auto& v = second_moment_[p];
        auto& theta = params[p].data();
        const auto& g = params[p].grad();
        if (m.size() != theta.size()) {
            throw ContractError("adam: moment buffer shape mismatch for parameter " + std::to_string(p));
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
        }
    }
}

double lr_schedule(long long epoch, double base_lr, std::size_t decay_period, double decay_factor) {
    if (epoch < 0) throw ContractError("lr_schedule: negative epoch");
    if (decay_period == 0) throw ConfigError("lr_schedule: decay period must be positive");
    const long long k = epoch / static_cast<long long>(decay_period);
    return base_lr * std::pow(decay_factor, -static_cast<double>(k));
}

}  // namespace decompl
