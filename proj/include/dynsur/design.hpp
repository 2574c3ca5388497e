#pragma once

#include "dynsur/signal.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace dynsur::design {

struct PoolEntry {
    std::size_t id = 0;
    std::uint64_t seed = 0;
    double amplitude = 0.0;
};

struct CandidatePool {
    std::vector<PoolEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    const PoolEntry& by_id(std::size_t id) const;
    void validate() const;
};

using Generator = std::function<Trajectory(std::uint64_t seed)>;
using AmplitudeStatistic = std::function<double(const Trajectory&)>;

/// Candidate i gets seed derive_seed(seed, i) and amplitude statistic(generator(seed_i)).
CandidatePool build_pool(std::size_t n_candidates, std::uint64_t seed, const Generator& generator,
                         const AmplitudeStatistic& statistic, std::size_t jobs = 1);

/// Uniform draw of n_ed distinct ids without replacement.
std::vector<std::size_t> random_subsample(const CandidatePool& pool, std::size_t n_ed, std::uint64_t seed);

/// Targets uniform on [A_min, A_max], each mapped to the nearest unused candidate amplitude.
std::vector<std::size_t> biased_select(const CandidatePool& pool, std::size_t n_ed, std::uint64_t seed);

/// Same as biased_select with explicit targets (in draw order).
std::vector<std::size_t> nearest_unused(const CandidatePool& pool, const std::vector<double>& targets);

enum class Strategy { random, biased };
Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

std::vector<std::size_t> select(const CandidatePool& pool, Strategy strategy, std::size_t n_ed, std::uint64_t seed);

/// CSV with columns id, seed, amplitude.
void write_pool(const std::filesystem::path& path, const std::vector<PoolEntry>& entries);
std::vector<PoolEntry> read_pool(const std::filesystem::path& path);

}  // namespace dynsur::design
