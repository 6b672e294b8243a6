#include "aide/optim.hpp"

#include <cmath>
#include <limits>

namespace aide {

void TrainSchedule::validate() const {
    if (!(lr_factor > 0.0 && lr_factor < 1.0))
        throw ConfigError("TrainSchedule: lr_factor must be in (0, 1)");
    if (min_lr > initial_lr) throw ConfigError("TrainSchedule: min_lr exceeds initial_lr");
    if (plateau_patience < 1) throw ConfigError("TrainSchedule: patience must be >= 1");
    if (max_epochs < 0) throw ConfigError("TrainSchedule: max_epochs must be >= 0");
}

void adam_step(ParamSet& params, double lr, int64_t t, const AdamConfig& cfg) {
    if (t < 1) throw StateError("adam_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));

    for (auto& [name, e] : params) {
        for (size_t i = 0; i < e.weights.size(); ++i) {
            const double g = e.gradient.data[i];
            if (!std::isfinite(g))
                throw NumericError("adam_step: non-finite gradient in parameter '" + name +
                                   "' at index " + std::to_string(i));
            e.adam_m.data[i] = cfg.beta1 * e.adam_m.data[i] + (1.0 - cfg.beta1) * g;
            e.adam_v.data[i] = cfg.beta2 * e.adam_v.data[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.adam_m.data[i] / bc1;
            const double vhat = e.adam_v.data[i] / bc2;
            e.weights.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
        quantize_f32(e.weights);
        e.gradient.fill(0.0);
    }
}

PlateauScheduler::PlateauScheduler(TrainSchedule sched)
    : sched_(sched), lr_(sched.initial_lr), best_(std::numeric_limits<double>::infinity()) {
    sched_.validate();
}

ScheduleDecision PlateauScheduler::update(double epoch_val_loss) {
    if (!std::isfinite(epoch_val_loss))
        throw NumericError("PlateauScheduler: validation loss is not finite");

    const bool improved = (best_ - epoch_val_loss) > sched_.early_stop_delta;
    if (improved) {
        best_ = epoch_val_loss;
        since_improve_ = 0;
        stall_ = 0;
    } else {
        ++since_improve_;
        ++stall_;
    }

    bool halved = false;
    if (since_improve_ >= sched_.plateau_patience) {
        const double next = std::max(lr_ * sched_.lr_factor, sched_.min_lr);
        halved = next < lr_;
        lr_ = next;
        since_improve_ = 0;
        if (halved) ++halvings_;
    }

    bool stop = false;
    if (sched_.stop_on_loss_value && epoch_val_loss < sched_.early_stop_delta) stop = true;
    if (stall_ >= 2 * sched_.plateau_patience && (halvings_ >= 1 || lr_ <= sched_.min_lr))
        stop = true;

    return {lr_, stop, halved};
}

} // namespace aide
