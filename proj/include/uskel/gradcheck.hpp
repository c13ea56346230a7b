#pragma once

#include <functional>
#include <string>

#include "uskel/params.hpp"

namespace uskel::num {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t worst_entry = 0;
    size_t entries_checked = 0;
};

// Central-difference oracle: builds the scalar loss twice per parameter entry
// and compares (f(p+h) - f(p-h)) / 2h against the analytic gradient.
// Relative error is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const std::function<Node(GraphCtx&)>& build_loss, ParamStore& params,
                           double step);

} // namespace uskel::num
