// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// AdamW with decoupled weight decay, plus the training schedule: linear
// warmup over the first warmup_frac of steps, then cosine annealing to zero.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prefopt/model.hpp"

namespace prefopt {

struct ScheduleConfig {
    double peak_lr = 1e-2;
    std::int64_t total_steps = 1;
    double warmup_frac = 0.10;
};

// round(warmup_frac * total_steps); always < total_steps for a valid config.
std::int64_t warmup_steps(const ScheduleConfig& cfg);

void validate_schedule(const ScheduleConfig& cfg);

// Warmup: peak * (step+1)/warmup_steps. Cosine phase:
// peak * 0.5 * (1 + cos(pi * (step - warmup)/(total - warmup))).
// Both formulas give exactly peak_lr at the phase boundary.
double lr_at_step(const ScheduleConfig& cfg, std::int64_t step);

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    AdamWConfig config;
    std::int64_t step_count = 0;
    std::vector<double> m; // first moments, flat over all parameters
    std::vector<double> v; // second moments
};

AdamWState make_adamw_state(std::size_t param_count, const AdamWConfig& cfg = {});

// One decoupled update over a single parameter array. t is the step count
// after incrementing (used for bias correction).
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, std::int64_t t, const AdamWConfig& cfg, double lr);

// Whole-model step: increments state.step_count once, then updates embedding,
// output and bias arrays in that fixed order.
void adamw_step(ModelParams& params, const ModelGradients& grads, AdamWState& state, double lr);

}  // namespace prefopt
