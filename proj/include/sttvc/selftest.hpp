#pragma once

#include <functional>
#include <string>
#include <vector>

namespace sttvc::selftest {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Oracle and gradient checks that run in seconds: range-coder round trips,
// parallel kernels against the serial reference, finite-difference
// gradients of the custom ops, frozen metric reference values and a small
// encode/decode lockstep run.
std::vector<CheckResult> run_all(const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace sttvc::selftest
