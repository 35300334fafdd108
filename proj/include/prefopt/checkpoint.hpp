// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat binary checkpoint: 8-byte magic, u32 format version, vocab ids and
// dims, then the three parameter arrays row-major, then an optional AdamW
// state blob. Little-endian throughout; load rejects unknown versions.

#pragma once

#include <optional>
#include <string>

#include "prefopt/model.hpp"
#include "prefopt/optim.hpp"

namespace prefopt {

inline constexpr char kCheckpointMagic[8] = {'P', 'F', 'O', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelParams params;
    std::optional<AdamWState> optimizer;
};

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamWState* optimizer = nullptr);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace prefopt
