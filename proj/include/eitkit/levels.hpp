#ifndef EITKIT_LEVELS_HPP
#define EITKIT_LEVELS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "eitkit/common.hpp"

namespace eit {

// One current injection: unit current enters at `src` and leaves at `dst`
// (1-based electrode ids).
struct InjectionPair {
    int src = 0;
    int dst = 0;
    std::string family;  // "adjacent" or "against_<hub>"
};

// The canonical injection schedule for a tank with L electrodes (L divisible
// by 8): adjacent odd-electrode pairs (1,3),(3,5),...,(L-1,1) plus, for each
// hub in {1, 1+L/4, 1+L/2, 1+3L/4}, one pattern per remaining odd electrode
// driving current into the hub. For L=32 this yields 76 patterns and, with
// L-1 adjacent measurements each, 2356 measurement rows.
std::vector<InjectionPair> challenge_injection_pairs(int n_electrodes = 32);

// Difficulty level k removes electrodes {1..2(k-1)}. A pattern survives iff
// neither injecting electrode is removed; a measurement row survives iff its
// pattern survives and neither electrode of its adjacent pair is removed.
struct LevelConfig {
    int level = 1;
    int n_electrodes = 32;
    std::vector<int> removed_electrodes;      // 1-based, ascending
    std::vector<std::uint8_t> electrode_active;  // size L
    std::vector<int> active_patterns;         // canonical pattern indices, ascending
    std::vector<std::uint8_t> row_mask;       // size K*(L-1), pattern-major

    int n_rows() const;
    int n_full_rows() const { return static_cast<int>(row_mask.size()); }
    bool electrode_removed(int id_1based) const;
};

LevelConfig level_config(int level, int n_electrodes = 32);

inline constexpr int kNumLevels = 7;

}  // namespace eit

#endif
