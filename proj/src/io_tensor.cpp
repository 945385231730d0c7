#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <regex>
#include <string>
#include <system_error>

#include "speclora/errors.hpp"
#include "speclora/io.hpp"

namespace speclora::io {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'L', 'W'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
    return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[at + static_cast<std::size_t>(i)];
    return v;
}

}  // namespace

std::size_t dtype_size(Dtype dtype) noexcept { return dtype == Dtype::f32 ? 4 : 8; }

std::string_view to_string(Dtype dtype) noexcept { return dtype == Dtype::f32 ? "f32" : "f64"; }

Dtype parse_dtype(std::string_view s) {
    if (s == "f32") return Dtype::f32;
    if (s == "f64") return Dtype::f64;
    throw FormatError("unknown dtype '" + std::string(s) + "'", 0);
}

std::vector<std::uint8_t> encode_tensor(const DenseMatrix& matrix, Dtype dtype) {
    constexpr auto kMaxDim = std::numeric_limits<std::uint32_t>::max();
    if (matrix.rows() > kMaxDim || matrix.cols() > kMaxDim) {
        throw DimensionError("encode_tensor: shape exceeds u32 limits");
    }
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + matrix.size() * dtype_size(dtype));
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kFormatVersion);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.insert(out.end(), 3, 0);
    put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
    put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
    put_u32(out, 0);
    const auto flat = matrix.flat();
    for (std::size_t i = 0; i < flat.size(); ++i) {
        const double x = flat[i];
        if (!std::isfinite(x)) {
            throw DataError("encode_tensor: non-finite value at flat index " + std::to_string(i), i);
        }
        if (dtype == Dtype::f64) {
            put_u64(out, std::bit_cast<std::uint64_t>(x));
        } else {
            const auto f = static_cast<float>(x);
            if (!std::isfinite(f)) {
                throw DataError("encode_tensor: value at flat index " + std::to_string(i) + " overflows f32", i);
            }
            put_u32(out, std::bit_cast<std::uint32_t>(f));
        }
    }
    return out;
}

DenseMatrix decode_tensor(std::span<const std::uint8_t> bytes, Dtype* dtype_out) {
    if (bytes.size() < kHeaderSize) {
        throw LengthError("tensor file shorter than the " + std::to_string(kHeaderSize) + "-byte header", kHeaderSize,
                          bytes.size());
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (bytes[i] != static_cast<std::uint8_t>(kMagic[i])) {
            throw FormatError("bad magic at offset " + std::to_string(i), i);
        }
    }
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kFormatVersion) {
        throw FormatError("unsupported version " + std::to_string(version) + " at offset 4", 4);
    }
    const std::uint8_t code = bytes[8];
    if (code > 1) {
        throw FormatError("unknown dtype code " + std::to_string(code) + " at offset 8", 8);
    }
    for (std::size_t i = 9; i < 12; ++i) {
        if (bytes[i] != 0) throw FormatError("reserved byte at offset " + std::to_string(i) + " is not zero", i);
    }
    for (std::size_t i = 20; i < 24; ++i) {
        if (bytes[i] != 0) throw FormatError("reserved byte at offset " + std::to_string(i) + " is not zero", i);
    }
    const auto dtype = static_cast<Dtype>(code);
    const std::uint64_t rows = get_u32(bytes, 12);
    const std::uint64_t cols = get_u32(bytes, 16);
    // rows·cols < 2^64 but the byte count can overflow; saturate instead.
    const std::uint64_t count = rows * cols;
    const std::uint64_t max64 = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t width = dtype_size(dtype);
    const std::uint64_t expected =
        count > (max64 - kHeaderSize) / width ? max64 : count * width + kHeaderSize;
    if (expected != bytes.size()) {
        const auto exp64 = expected;
        throw LengthError("tensor payload length mismatch: header " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " " + std::string(to_string(dtype)) + " needs " +
                              std::to_string(exp64) + " bytes, file has " + std::to_string(bytes.size()),
                          exp64, bytes.size());
    }
    DenseMatrix out(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    auto flat = out.flat();
    std::size_t at = kHeaderSize;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        double x;
        if (dtype == Dtype::f64) {
            x = std::bit_cast<double>(get_u64(bytes, at));
            at += 8;
        } else {
            x = static_cast<double>(std::bit_cast<float>(get_u32(bytes, at)));
            at += 4;
        }
        if (!std::isfinite(x)) {
            throw DataError("non-finite value at flat index " + std::to_string(i), i);
        }
        flat[i] = x;
    }
    if (dtype_out) *dtype_out = dtype;
    return out;
}

void write_tensor(const std::filesystem::path& path, const DenseMatrix& matrix, Dtype dtype) {
    const auto bytes = encode_tensor(matrix, dtype);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing: " + std::strerror(errno));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for " + path.string() + ": " + std::strerror(errno));
    }
}

DenseMatrix read_tensor(const std::filesystem::path& path, Dtype* dtype_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_tensor(bytes, dtype_out);
}

bool valid_tensor_name(std::string_view name) {
    static const std::regex grammar(R"(layer\.(0|[1-9][0-9]*)\.(q|k|v|up|down)(\.[A-Za-z0-9_]+)*)");
    return std::regex_match(name.begin(), name.end(), grammar);
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0;
    std::size_t star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

}  // namespace speclora::io
