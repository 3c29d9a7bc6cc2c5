#include "decompl/flops.hpp"

namespace decompl::flops {

namespace {
bool g_enabled = false;
std::uint64_t g_total = 0;
}  // namespace

void enable(bool on) { g_enabled = on; }
bool enabled() { return g_enabled; }
void add(std::uint64_t n) { g_total += n; }
void reset() { g_total = 0; }
std::uint64_t total() { return g_total; }

CountScope::CountScope() : previous_(g_enabled), start_(g_total) { g_enabled = true; }
CountScope::~CountScope() { g_enabled = previous_; }
std::uint64_t CountScope::delta() const { return g_total - start_; }

}  // namespace decompl::flops
