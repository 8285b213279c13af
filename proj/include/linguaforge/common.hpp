// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace lf {

enum class ErrorCode {
    EmptyCorpus,
    IncompatibleAlphabets,
    UnknownTokenId,
    ConfigError,
    ShrinkNotAllowed,
    AlreadyAdapted,
    ContextOverflow,
    NothingToMerge,
    EmptyMask,
    NonFiniteLoss,
    DatasetNotFound,
    EncodingError,
    ParseError,
    ValidationError,
    CorpusTooShort,
    PairMismatch,
    ZeroVector,
    UndefinedCorrelation,
    InvalidInput,
    IoError,
};

inline std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::IncompatibleAlphabets: return "IncompatibleAlphabets";
        case ErrorCode::UnknownTokenId: return "UnknownTokenId";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::ShrinkNotAllowed: return "ShrinkNotAllowed";
        case ErrorCode::AlreadyAdapted: return "AlreadyAdapted";
        case ErrorCode::ContextOverflow: return "ContextOverflow";
        case ErrorCode::NothingToMerge: return "NothingToMerge";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::DatasetNotFound: return "DatasetNotFound";
        case ErrorCode::EncodingError: return "EncodingError";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::ValidationError: return "ValidationError";
        case ErrorCode::CorpusTooShort: return "CorpusTooShort";
        case ErrorCode::PairMismatch: return "PairMismatch";
        case ErrorCode::ZeroVector: return "ZeroVector";
        case ErrorCode::UndefinedCorrelation: return "UndefinedCorrelation";
        case ErrorCode::InvalidInput: return "InvalidInput";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

// Deterministic RNG. The engine (mt19937_64) is fully specified by the
// standard; the distributions below are hand-rolled because the standard
// library's are implementation-defined and would break cross-platform
// reproducibility of checkpoints.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of entropy.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) raise(ErrorCode::InvalidInput, "below(0) is undefined");
        // Rejection sampling to avoid modulo bias.
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    // Standard normal via Box-Muller (no cached spare, for simpler replay).
    double gaussian() {
        double u1 = uniform();
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Derive an independent stream, e.g. one per tensor or per curriculum phase.
    Rng fork(std::uint64_t salt) {
        return Rng(next_u64() ^ (salt * 0x9E3779B97F4A7C15ull));
    }

private:
    std::mt19937_64 engine_;
};

// FNV-1a 64-bit digest, used to fingerprint resolved run configs in reports.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline std::string hex_digest(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

// Worker count for parallel sections; LINGUAFORGE_THREADS caps it.
inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("LINGUAFORGE_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap >= 1 && static_cast<unsigned>(cap) < n) n = static_cast<unsigned>(cap);
    }
    return n;
}

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks so
// results indexed by i are deterministic regardless of worker count. The
// first exception a worker throws is rethrown on the calling thread after
// all workers join.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = worker_count();
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    const std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::exception_ptr> errors((n + chunk - 1) / chunk);
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        if (begin >= n) break;
        const std::size_t end = std::min(n, begin + chunk);
        threads.emplace_back([&fn, &errors, w, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& error : errors) {
        if (error) std::rethrow_exception(error);
    }
}

}  // namespace lf
