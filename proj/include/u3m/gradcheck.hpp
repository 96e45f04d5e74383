#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "u3m/params.hpp"
#include "u3m/tape.hpp"
#include "u3m/tensor.hpp"

namespace u3m {

struct GradCheckOptions {
    double eps = 1e-5;
    /// Coordinates sampled per parameter (all of them when the parameter is
    /// smaller than this).
    size_t coords_per_param = 100;
    uint64_t seed = 20240601;
    /// Coordinates where both |g_ad| and |g_fd| fall below this are below
    /// the central-difference noise floor and carry no directional
    /// information; they are counted but excluded from the relative-error
    /// maximum. 0 (the default) compares every coordinate. Deep composite
    /// checks (full model) set this to a declared small value; a broken
    /// backward still fails, because a wrongly large AD value goes over the
    /// floor and mismatches, and a wrongly zero AD value meets a live FD.
    double signal_floor = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    size_t worst_coord = 0;
    size_t coords_checked = 0;
    size_t coords_below_floor = 0;
};

/// Central-difference check of reverse-mode gradients. `f` must be a
/// deterministic scalar function of the store's trainable parameters: called
/// with a tape it records, called with nullptr it just evaluates.
/// rel err = |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
inline GradCheckReport grad_check(const std::function<Tensor(Tape*)>& f, ParamStore& params,
                                  GradCheckOptions opt = {}) {
    if (!(opt.eps >= 1e-7 && opt.eps <= 1e-3)) throw config_error("grad_check eps must lie in [1e-7, 1e-3]");

    Tape tape;
    Tensor loss = f(&tape);
    if (loss.numel() != 1) throw shape_error("grad_check function must return a scalar");
    if (!loss.all_finite()) throw numeric_error("grad_check function evaluated to a non-finite value");
    Gradients grads = tape.backward(loss);

    GradCheckReport rep;
    for (Parameter& p : params.items()) {
        if (!p.trainable) continue;
        size_t n = p.value.numel();
        std::vector<size_t> coords;
        if (n <= opt.coords_per_param) {
            coords.resize(n);
            for (size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            uint64_t h = 1469598103934665603ull;  // FNV-1a of the name, build-independent
            for (char ch : p.name) h = (h ^ static_cast<unsigned char>(ch)) * 1099511628211ull;
            Rng rng(opt.seed ^ h);
            std::unordered_set<size_t> seen;
            while (seen.size() < opt.coords_per_param) seen.insert(static_cast<size_t>(rng.below(n)));
            coords.assign(seen.begin(), seen.end());
            std::sort(coords.begin(), coords.end());
        }

        auto git = grads.find(p.name);
        for (size_t c : coords) {
            double* d = p.value.mut();
            double saved = d[c];
            d[c] = saved + opt.eps;
            double fplus = f(nullptr).value();
            d = p.value.mut();
            d[c] = saved - opt.eps;
            double fminus = f(nullptr).value();
            d = p.value.mut();
            d[c] = saved;
            if (!std::isfinite(fplus) || !std::isfinite(fminus))
                throw numeric_error("grad_check function evaluated to a non-finite value at " + p.name);

            double g_fd = (fplus - fminus) / (2.0 * opt.eps);
            double g_ad = git != grads.end() ? git->second.data()[c] : 0.0;
            ++rep.coords_checked;
            if (std::fabs(g_ad) < opt.signal_floor && std::fabs(g_fd) < opt.signal_floor) {
                ++rep.coords_below_floor;
                continue;
            }
            double rel = std::fabs(g_ad - g_fd) / std::max({std::fabs(g_ad), std::fabs(g_fd), 1e-8});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p.name;
                rep.worst_coord = c;
            }
        }
    }
    return rep;
}

}  // namespace u3m
