#pragma once

#include <cstdint>

#include "aide/autodiff.hpp"

namespace aide {

/// Learning-rate schedule and stopping rules for one training run.
struct TrainSchedule {
    double initial_lr = 1e-5;
    int plateau_patience = 5;
    double lr_factor = 0.5;
    double min_lr = 1e-10;
    double early_stop_delta = 1e-5;
    int max_epochs = 100;
    /// Alternate reading of the stopping rule: also stop once the validation
    /// loss value itself drops below early_stop_delta.
    bool stop_on_loss_value = false;

    void validate() const;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// One Adam update with bias correction over every entry of `params`
/// (t counts from 1). Gradients are zeroed afterwards and weights snap back
/// onto the float32 storage grid. Throws NumericError naming the parameter
/// when a gradient is not finite.
void adam_step(ParamSet& params, double lr, int64_t t, const AdamConfig& cfg = {});

struct ScheduleDecision {
    double lr;
    bool stop;
    bool halved; // lr was reduced this epoch
};

/// Plateau scheduler with early stopping. An epoch "improves" when the
/// validation loss beats the best seen by more than early_stop_delta.
/// plateau_patience non-improving epochs halve the lr (never below min_lr);
/// training stops after 2x plateau_patience consecutive non-improving epochs
/// once at least one halving happened or the lr sits at min_lr.
class PlateauScheduler {
public:
    explicit PlateauScheduler(TrainSchedule sched);

    ScheduleDecision update(double epoch_val_loss);

    double lr() const { return lr_; }
    double best_loss() const { return best_; }

private:
    TrainSchedule sched_;
    double lr_;
    double best_;
    int since_improve_ = 0; // resets on improvement and on halving
    int stall_ = 0;         // resets on improvement only
    int halvings_ = 0;
};

} // namespace aide
