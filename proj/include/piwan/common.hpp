#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace piwan {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// dynamics
struct NonUnitQuaternion : Error { using Error::Error; };
struct NonFiniteState : Error { using Error::Error; };

// solver
struct NonFiniteJacobian : Error { using Error::Error; };
struct SolverDiverged : Error { using Error::Error; };
struct HorizonMismatch : Error { using Error::Error; };

// data / model / training
struct RolloutTooShort : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct HistoryNotWarm : Error { using Error::Error; };

// trajectories / reports / io / config
struct UnknownKind : Error { using Error::Error; };
struct EmptyReport : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

// Runs fn(0..n-1) on up to `threads` workers (0 = hardware concurrency).
// Work is partitioned by index, so writes into pre-sized per-index slots
// give identical results regardless of scheduling. The first exception
// thrown by any worker is rethrown after all workers join.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// Deterministic stream splitting for RNG seeds (splitmix64 over the pair).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

// FNV-1a over a byte range; used for layout fingerprints and file checks.
std::uint64_t fnv1a(const void* data, std::size_t size);

// Shortest round-trippable decimal form of a double ("%.17g" fallback).
std::string format_double(double value);

}  // namespace piwan
