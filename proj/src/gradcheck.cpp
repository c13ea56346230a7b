#include "uskel/gradcheck.hpp"

#include <cmath>

namespace uskel::num {

GradCheckReport grad_check(const std::function<Node(GraphCtx&)>& build_loss, ParamStore& params,
                           double step) {
    // Analytic pass.
    std::vector<std::pair<std::string, Array>> grads;
    {
        Tape tape;
        GraphCtx ctx{tape, params, /*train=*/true};
        Node loss = build_loss(ctx);
        tape.backward(loss);
        for (const Binding& b : ctx.bound) {
            const auto& [name, value] = params.items()[b.store_idx];
            const Tape::Rec& rec = tape.rec(b.node_id);
            grads.emplace_back(name, rec.grad_ready ? rec.grad : Array(value.shape));
        }
    }

    auto eval = [&]() {
        Tape tape;
        GraphCtx ctx{tape, params, /*train=*/false};
        Node loss = build_loss(ctx);
        if (loss.val().size() != 1) throw GraphError("grad_check: loss must be scalar");
        return loss.val()[0];
    };

    GradCheckReport report;
    for (const auto& [name, g] : grads) {
        Array& value = params.at(name);
        for (size_t i = 0; i < value.size(); ++i) {
            double keep = value[i];
            value[i] = keep + step;
            double fp = eval();
            value[i] = keep - step;
            double fm = eval();
            value[i] = keep;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw GraphError("grad_check: non-finite perturbed loss at " + name);
            double numeric = (fp - fm) / (2.0 * step);
            double analytic = g[i];
            double rel = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = name;
                report.worst_entry = i;
            }
            ++report.entries_checked;
        }
    }
    return report;
}

} // namespace uskel::num
