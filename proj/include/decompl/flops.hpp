#pragma once

#include <cstdint>

namespace decompl::flops {

// Process-wide floating-point operation counter. Tensor ops report their
// forward cost here whenever counting is enabled. Counting convention:
// one multiply-accumulate is 2 FLOPs, one nonlinearity evaluation is
// 1 FLOP per element, data movement (reshape, concat, slice, gather,
// transpose, padding) is free. Single-threaded by contract.
void enable(bool on);
bool enabled();
void add(std::uint64_t n);
void reset();
std::uint64_t total();

// Enables counting for the current scope and restores the previous state
// on exit; delta() reads the operations recorded since construction.
class CountScope {
public:
    CountScope();
    ~CountScope();
    CountScope(const CountScope&) = delete;
    CountScope& operator=(const CountScope&) = delete;

    std::uint64_t delta() const;

private:
    bool previous_;
    std::uint64_t start_;
};

}  // namespace decompl::flops
