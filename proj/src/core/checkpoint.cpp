// Copyright 2026 The jferc Authors
// Flat binary tensor container (checkpoints, embedding files)
//
// Licensed under the Apache License, Version 2.0

#include "core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace jferc {

namespace {

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t get_u64(std::istream& is, const std::string& path, const char* what) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (is.gcount() != 8) throw FormatError(path + ": truncated record (" + what + ")");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

void put_f64(std::ostream& os, double d) {
    uint64_t bits = std::bit_cast<uint64_t>(d);
    put_u64(os, bits);
}

double get_f64(std::istream& is, const std::string& path) {
    uint64_t bits = get_u64(is, path, "f64 payload");
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kContainerMagic, 6);
    for (const auto& [name, t] : tensors) {
        if (!t.defined()) throw ContractError("save_tensors: undefined tensor '" + name + "'");
        put_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(os, static_cast<uint64_t>(t.rank()));
        for (int64_t d : t.shape()) put_u64(os, static_cast<uint64_t>(d));
        for (double v : t.data()) put_f64(os, v);
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    char magic[6];
    is.read(magic, 6);
    if (is.gcount() != 6 || std::memcmp(magic, kContainerMagic, 6) != 0) {
        throw FormatError(path + ": bad magic, not a JFERC1 tensor container");
    }
    std::vector<std::pair<std::string, Tensor>> out;
    while (true) {
        is.peek();
        if (is.eof()) break;
        uint64_t name_len = get_u64(is, path, "name length");
        if (name_len > (1u << 20)) throw FormatError(path + ": implausible name length");
        std::string name(name_len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(name_len));
        if (is.gcount() != static_cast<std::streamsize>(name_len)) {
            throw FormatError(path + ": truncated tensor name");
        }
        uint64_t rank = get_u64(is, path, "rank");
        if (rank > 8) throw FormatError(path + ": implausible tensor rank");
        Shape shape;
        int64_t numel = 1;
        for (uint64_t i = 0; i < rank; ++i) {
            uint64_t d = get_u64(is, path, "dim");
            shape.push_back(static_cast<int64_t>(d));
            numel *= static_cast<int64_t>(d);
        }
        std::vector<double> data(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) data[static_cast<size_t>(i)] = get_f64(is, path);
        out.emplace_back(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return out;
}

}  // namespace jferc
