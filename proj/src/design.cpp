#include "dynsur/design.hpp"

#include "dynsur/csv.hpp"
#include "dynsur/errors.hpp"
#include "dynsur/parallel.hpp"
#include "dynsur/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace dynsur::design {

const PoolEntry& CandidatePool::by_id(std::size_t id) const {
    if (id < entries.size() && entries[id].id == id) {
        return entries[id];
    }
    for (const auto& e : entries) {
        if (e.id == id) {
            return e;
        }
    }
    throw IndexError("pool has no candidate with id " + std::to_string(id));
}

void CandidatePool::validate() const {
    std::set<std::size_t> ids;
    for (const auto& e : entries) {
        if (!std::isfinite(e.amplitude) || e.amplitude < 0.0) {
            throw DegenerateDataError("pool: amplitude of candidate " + std::to_string(e.id) +
                                      " is negative or non-finite");
        }
        if (!ids.insert(e.id).second) {
            throw ConfigError("pool: duplicate id " + std::to_string(e.id));
        }
    }
}

CandidatePool build_pool(std::size_t n_candidates, std::uint64_t seed, const Generator& generator,
                         const AmplitudeStatistic& statistic, std::size_t jobs) {
    CandidatePool pool;
    pool.entries.resize(n_candidates);
    parallel_for(n_candidates, jobs, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(i));
        pool.entries[i] = PoolEntry{i, s, statistic(generator(s))};
    });
    pool.validate();
    return pool;
}

std::vector<std::size_t> random_subsample(const CandidatePool& pool, std::size_t n_ed, std::uint64_t seed) {
    const std::size_t n = pool.size();
    if (n_ed > n) {
        std::ostringstream msg;
        msg << "random design: " << n_ed << " traces requested from a pool of " << n;
        throw SizeError(msg.str());
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < n_ed; ++i) {
        const std::size_t j = i + uniform_index(rng, n - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::size_t> out;
    out.reserve(n_ed);
    for (std::size_t i = 0; i < n_ed; ++i) {
        out.push_back(pool.entries[idx[i]].id);
    }
    return out;
}

std::vector<std::size_t> nearest_unused(const CandidatePool& pool, const std::vector<double>& targets) {
    const std::size_t n = pool.size();
    if (targets.size() > n) {
        throw SizeError("biased design: more targets than candidates");
    }
    // Pool positions sorted by amplitude (ties by id for determinism).
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ea = pool.entries[a];
        const auto& eb = pool.entries[b];
        return ea.amplitude != eb.amplitude ? ea.amplitude < eb.amplitude : ea.id < eb.id;
    });
    std::vector<double> amp(n);
    for (std::size_t k = 0; k < n; ++k) {
        amp[k] = pool.entries[order[k]].amplitude;
    }
    std::vector<char> used(n, 0);
    std::vector<std::size_t> out;
    out.reserve(targets.size());
    for (double a : targets) {
        const auto upper = static_cast<std::ptrdiff_t>(std::lower_bound(amp.begin(), amp.end(), a) - amp.begin());
        // Walk outward from the insertion point to the closest candidate not yet taken.
        std::ptrdiff_t lo = upper - 1;
        std::ptrdiff_t hi = upper;
        while (lo >= 0 && used[static_cast<std::size_t>(lo)]) {
            --lo;
        }
        while (hi < static_cast<std::ptrdiff_t>(n) && used[static_cast<std::size_t>(hi)]) {
            ++hi;
        }
        std::ptrdiff_t pick;
        if (lo < 0) {
            pick = hi;
        } else if (hi >= static_cast<std::ptrdiff_t>(n)) {
            pick = lo;
        } else {
            pick = (a - amp[static_cast<std::size_t>(lo)] <= amp[static_cast<std::size_t>(hi)] - a) ? lo : hi;
        }
        used[static_cast<std::size_t>(pick)] = 1;
        out.push_back(pool.entries[order[static_cast<std::size_t>(pick)]].id);
    }
    return out;
}

std::vector<std::size_t> biased_select(const CandidatePool& pool, std::size_t n_ed, std::uint64_t seed) {
    if (n_ed > pool.size()) {
        std::ostringstream msg;
        msg << "biased design: " << n_ed << " traces requested from a pool of " << pool.size();
        throw SizeError(msg.str());
    }
    if (n_ed == 0) {
        return {};
    }
    double a_min = pool.entries.front().amplitude;
    double a_max = a_min;
    for (const auto& e : pool.entries) {
        a_min = std::min(a_min, e.amplitude);
        a_max = std::max(a_max, e.amplitude);
    }
    Rng rng(seed);
    std::uniform_real_distribution<double> u(a_min, a_max);
    std::vector<double> targets(n_ed);
    for (auto& t : targets) {
        t = a_max > a_min ? u(rng) : a_min;
    }
    return nearest_unused(pool, targets);
}

Strategy parse_strategy(const std::string& s) {
    if (s == "random") {
        return Strategy::random;
    }
    if (s == "biased") {
        return Strategy::biased;
    }
    throw ConfigError("unknown design strategy '" + s + "' (expected random or biased)");
}

std::string to_string(Strategy s) { return s == Strategy::random ? "random" : "biased"; }

std::vector<std::size_t> select(const CandidatePool& pool, Strategy strategy, std::size_t n_ed, std::uint64_t seed) {
    return strategy == Strategy::random ? random_subsample(pool, n_ed, seed) : biased_select(pool, n_ed, seed);
}

void write_pool(const std::filesystem::path& path, const std::vector<PoolEntry>& entries) {
    csv::Table t;
    t.header = {"id", "seed", "amplitude"};
    for (const auto& e : entries) {
        t.rows.push_back({std::to_string(e.id), std::to_string(e.seed), csv::format_double(e.amplitude)});
    }
    csv::write_table(path, t);
}

std::vector<PoolEntry> read_pool(const std::filesystem::path& path) {
    const csv::Table t = csv::read_table(path);
    const std::size_t ci = t.column("id");
    const std::size_t cs = t.column("seed");
    // gen-excitation indexes name the column max_abs_amplitude
    const bool short_name = std::find(t.header.begin(), t.header.end(), "amplitude") != t.header.end();
    const std::size_t ca = t.column(short_name ? "amplitude" : "max_abs_amplitude");
    std::vector<PoolEntry> out;
    for (const auto& r : t.rows) {
        try {
            std::size_t pos = 0;
            PoolEntry e;
            e.id = std::stoull(r[ci], &pos);
            e.seed = std::stoull(r[cs], &pos);
            e.amplitude = std::stod(r[ca], &pos);
            out.push_back(e);
        } catch (const std::exception&) {
            throw IoError("pool " + path.string() + ": malformed row");
        }
    }
    return out;
}

}  // namespace dynsur::design
