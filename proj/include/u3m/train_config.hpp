#pragma once

#include <cstdint>

#include "u3m/error.hpp"

namespace u3m {

enum class LrSchedule { constant, cosine };

/// Training recipe. lr/batch defaults follow the published setup; everything
/// is overridable for desk-scale runs.
struct TrainConfig {
    double lr = 6e-5;
    LrSchedule schedule = LrSchedule::constant;
    size_t batch_size = 4;
    size_t epochs = 10;
    uint64_t seed = 42;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool freeze_encoders = false;
    bool aug_hflip = true;
    bool aug_rotate = true;
    bool aug_scale = true;
    int ignore_index = 255;
    bool pad_to_32 = false;

    void validate() const {
        if (!(lr >= 0.0)) throw config_error("lr must be non-negative");
        if (batch_size < 1) throw config_error("batch_size must be >= 1");
        if (epochs < 1) throw config_error("epochs must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw config_error("adam betas must lie in [0,1)");
        if (!(adam_eps > 0.0)) throw config_error("adam eps must be positive");
        if (ignore_index < 0) throw config_error("ignore_index must be non-negative");
    }
};

}  // namespace u3m
