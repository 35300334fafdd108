// Copyright 2026 The prefopt Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefopt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace prefopt {

namespace {

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const char* path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) {
        throw std::runtime_error(std::string("checkpoint: truncated file: ") + path);
    }
}

template <class T>
void write_pod(std::ofstream& out, T value) {
    write_bytes(out, &value, sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const char* path) {
    T value;
    read_bytes(in, &value, sizeof(T), path);
    return value;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    write_bytes(out, v.data(), v.size() * sizeof(double));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, std::size_t n, const char* path) {
    v.resize(n);
    read_bytes(in, v.data(), n * sizeof(double), path);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamWState* optimizer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    }
    write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
    write_pod<std::uint32_t>(out, kCheckpointVersion);
    write_pod<std::int32_t>(out, params.vocab.size);
    write_pod<std::int32_t>(out, params.vocab.bos_id);
    write_pod<std::int32_t>(out, params.vocab.eos_id);
    write_pod<std::int32_t>(out, params.vocab.pad_id);
    write_pod<std::int32_t>(out, params.dim);
    write_doubles(out, params.embedding);
    write_doubles(out, params.output);
    write_doubles(out, params.bias);

    write_pod<std::uint8_t>(out, optimizer ? 1 : 0);
    if (optimizer) {
        if (optimizer->m.size() != params.param_count()) {
            throw std::invalid_argument("checkpoint: optimizer state sized for a different model");
        }
        write_pod<std::int64_t>(out, optimizer->step_count);
        write_pod<double>(out, optimizer->config.beta1);
        write_pod<double>(out, optimizer->config.beta2);
        write_pod<double>(out, optimizer->config.eps);
        write_pod<double>(out, optimizer->config.weight_decay);
        write_doubles(out, optimizer->m);
        write_doubles(out, optimizer->v);
    }
    if (!out) {
        throw std::runtime_error("checkpoint: write failed: " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("checkpoint: cannot open: " + path);
    }
    const char* p = path.c_str();

    char magic[8];
    read_bytes(in, magic, sizeof(magic), p);
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw std::runtime_error("checkpoint: bad magic: " + path);
    }
    const auto version = read_pod<std::uint32_t>(in, p);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version) + ": " + path);
    }

    Checkpoint ck;
    ck.params.vocab.size = read_pod<std::int32_t>(in, p);
    ck.params.vocab.bos_id = read_pod<std::int32_t>(in, p);
    ck.params.vocab.eos_id = read_pod<std::int32_t>(in, p);
    ck.params.vocab.pad_id = read_pod<std::int32_t>(in, p);
    ck.params.dim = read_pod<std::int32_t>(in, p);
    validate_vocab(ck.params.vocab);
    if (ck.params.dim < 1) {
        throw std::runtime_error("checkpoint: invalid dim: " + path);
    }

    const std::size_t v = static_cast<std::size_t>(ck.params.vocab.size);
    const std::size_t d = static_cast<std::size_t>(ck.params.dim);
    read_doubles(in, ck.params.embedding, v * d, p);
    read_doubles(in, ck.params.output, d * v, p);
    read_doubles(in, ck.params.bias, v, p);

    const auto has_opt = read_pod<std::uint8_t>(in, p);
    if (has_opt == 1) {
        AdamWState s;
        s.step_count = read_pod<std::int64_t>(in, p);
        s.config.beta1 = read_pod<double>(in, p);
        s.config.beta2 = read_pod<double>(in, p);
        s.config.eps = read_pod<double>(in, p);
        s.config.weight_decay = read_pod<double>(in, p);
        const std::size_t n = ck.params.param_count();
        read_doubles(in, s.m, n, p);
        read_doubles(in, s.v, n, p);
        ck.optimizer = std::move(s);
    } else if (has_opt != 0) {
        throw std::runtime_error("checkpoint: corrupt optimizer flag: " + path);
    }
    return ck;
}

}  // namespace prefopt
