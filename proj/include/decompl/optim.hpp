#pragma once

#include <cstddef>
#include <vector>

#include "decompl/tensor.hpp"

namespace decompl {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are laid out to match the
// parameter list handed to the constructor; step() expects the same list.
class AdamState {
public:
    AdamState(const std::vector<Tensor>& params, double base_lr = 1e-4, AdamConfig cfg = {});

    void step(std::vector<Tensor>& params, double lr);
    void step(std::vector<Tensor>& params) { step(params, base_lr_); }

    std::size_t step_count() const { return step_count_; }
    double base_lr() const { return base_lr_; }

private:
    std::vector<std::vector<double>> first_moment_;
    std::vector<std::vector<double>> second_moment_;
    std::size_t step_count_ = 0;
    double base_lr_;
    AdamConfig cfg_;
};

// Step decay: base_lr * factor^(-floor(epoch / period)). ContractError on a
// negative epoch.
double lr_schedule(long long epoch, double base_lr = 1e-4, std::size_t decay_period = 30,
                   double decay_factor = 2.0);

}  // namespace decompl
