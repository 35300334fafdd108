// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefopt/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace prefopt {

std::int64_t warmup_steps(const ScheduleConfig& cfg) {
    return std::llround(cfg.warmup_frac * static_cast<double>(cfg.total_steps));
}

void validate_schedule(const ScheduleConfig& cfg) {
    // peak_lr 0 is allowed: it makes every step a no-op, which the trainer
    // relies on for dry runs.
    if (!(cfg.peak_lr >= 0.0) || !std::isfinite(cfg.peak_lr)) {
        throw std::invalid_argument("schedule: peak_lr must be finite and >= 0");
    }
    if (cfg.total_steps < 1) {
        throw std::invalid_argument("schedule: total_steps must be >= 1");
    }
    if (!(cfg.warmup_frac >= 0.0 && cfg.warmup_frac < 1.0)) {
        throw std::invalid_argument("schedule: warmup_frac must be in [0,1)");
    }
    if (warmup_steps(cfg) >= cfg.total_steps) {
        throw std::invalid_argument("schedule: warmup must end before the last step");
    }
}

double lr_at_step(const ScheduleConfig& cfg, std::int64_t step) {
    validate_schedule(cfg);
    if (step < 0 || step >= cfg.total_steps) {
        throw std::invalid_argument("lr_at_step: step out of range");
    }
    const std::int64_t warm = warmup_steps(cfg);
    if (step < warm) {
        return cfg.peak_lr * static_cast<double>(step + 1) / static_cast<double>(warm);
    }
    const double progress =
        static_cast<double>(step - warm) / static_cast<double>(cfg.total_steps - warm);
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamWState make_adamw_state(std::size_t param_count, const AdamWConfig& cfg) {
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
        throw std::invalid_argument("adamw: beta1/beta2 must be in [0,1)");
    }
    if (!(cfg.eps > 0.0)) {
        throw std::invalid_argument("adamw: eps must be positive");
    }
    if (cfg.weight_decay < 0.0) {
        throw std::invalid_argument("adamw: weight_decay must be nonnegative");
    }
    AdamWState s;
    s.config = cfg;
    s.m.assign(param_count, 0.0);
    s.v.assign(param_count, 0.0);
    return s;
}

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, std::int64_t t, const AdamWConfig& cfg, double lr) {
    if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
        throw std::invalid_argument("adamw_update: shape mismatch");
    }
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g * g);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * params[i]);
    }
}

void adamw_step(ModelParams& params, const ModelGradients& grads, AdamWState& state, double lr) {
    if (state.m.size() != params.param_count()) {
        throw std::invalid_argument("adamw_step: state sized for a different model");
    }
    if (grads.embedding.size() != params.embedding.size() ||
        grads.output.size() != params.output.size() || grads.bias.size() != params.bias.size()) {
        throw std::invalid_argument("adamw_step: gradient shape mismatch");
    }
    state.step_count += 1;
    const std::int64_t t = state.step_count;

    std::size_t off = 0;
    const auto run = [&](std::vector<double>& p, const std::vector<double>& g) {
        adamw_update(std::span<double>(p), std::span<const double>(g),
                     std::span<double>(state.m.data() + off, p.size()),
                     std::span<double>(state.v.data() + off, p.size()), t, state.config, lr);
        off += p.size();
    };
    run(params.embedding, grads.embedding);
    run(params.output, grads.output);
    run(params.bias, grads.bias);
}

}  // namespace prefopt
