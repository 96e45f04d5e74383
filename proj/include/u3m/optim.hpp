#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "u3m/params.hpp"
#include "u3m/tape.hpp"
#include "u3m/train_config.hpp"

namespace u3m {

/// Per-parameter first/second Adam moments plus the shared step counter.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    size_t t = 0;

    explicit AdamState(const ParamStore& params) {
        m.reserve(params.size());
        v.reserve(params.size());
        for (const Parameter& p : params.items()) {
            m.push_back(Tensor::zeros(p.value.shape()));
            v.push_back(Tensor::zeros(p.value.shape()));
        }
    }
};

/// One bias-corrected Adam update over every trainable parameter. Frozen
/// parameters keep their bytes; a trainable parameter without a gradient is
/// a consistency error.
inline void adam_step(ParamStore& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg,
                      double lr_override = -1.0) {
    cfg.validate();
    double lr = lr_override > 0.0 ? lr_override : cfg.lr;
    state.t += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.items().size(); ++i) {
        Parameter& p = params.items()[i];
        if (!p.trainable) continue;
        auto it = grads.find(p.name);
        if (it == grads.end()) throw state_error("missing gradient for trainable parameter " + p.name);
        const Tensor& g = it->second;
        if (g.shape() != p.value.shape())
            throw shape_error("gradient shape " + shape_str(g.shape()) + " != parameter shape " +
                              shape_str(p.value.shape()) + " for " + p.name);
        double* md = state.m[i].mut();
        double* vd = state.v[i].mut();
        double* pd = p.value.mut();
        const double* gd = g.data();
        size_t n = p.value.numel();
        for (size_t j = 0; j < n; ++j) {
            md[j] = cfg.beta1 * md[j] + (1.0 - cfg.beta1) * gd[j];
            vd[j] = cfg.beta2 * vd[j] + (1.0 - cfg.beta2) * gd[j] * gd[j];
            double mh = md[j] / bc1;
            double vh = vd[j] / bc2;
            pd[j] -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
        }
    }
}

/// Effective learning rate for a 1-based epoch under the configured schedule.
inline double scheduled_lr(const TrainConfig& cfg, size_t epoch) {
    if (cfg.schedule == LrSchedule::constant || cfg.epochs <= 1) return cfg.lr;
    double progress = static_cast<double>(epoch - 1) / static_cast<double>(cfg.epochs - 1);
    return 0.5 * cfg.lr * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace u3m
