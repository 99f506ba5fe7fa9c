#include "eitkit/levels.hpp"

#include <algorithm>

namespace eit {

std::vector<InjectionPair> challenge_injection_pairs(int n_electrodes) {
    const int L = n_electrodes;
    if (L < 8 || L % 8 != 0) {
        throw ConfigError("challenge injection schedule requires n_electrodes divisible by 8, got " +
                          std::to_string(L));
    }
    std::vector<InjectionPair> pairs;
    // adjacent odd pairs, cyclic
    for (int a = 1; a <= L - 1; a += 2) {
        const int b = (a + 2 <= L - 1) ? a + 2 : 1;
        pairs.push_back({a, b, "adjacent"});
    }
    // all remaining odd electrodes against each hub
    const int hubs[4] = {1, 1 + L / 4, 1 + L / 2, 1 + 3 * L / 4};
    for (int hub : hubs) {
        for (int o = 1; o <= L - 1; o += 2) {
            if (o == hub) continue;
            pairs.push_back({o, hub, "against_" + std::to_string(hub)});
        }
    }
    return pairs;
}

int LevelConfig::n_rows() const {
    return static_cast<int>(std::count(row_mask.begin(), row_mask.end(), std::uint8_t{1}));
}

bool LevelConfig::electrode_removed(int id_1based) const {
    return id_1based >= 1 && id_1based <= static_cast<int>(removed_electrodes.size());
}

LevelConfig level_config(int level, int n_electrodes) {
    if (level < 1 || level > kNumLevels) {
        throw ConfigError("level must be in 1.." + std::to_string(kNumLevels) + ", got " +
                          std::to_string(level));
    }
    const int L = n_electrodes;
    LevelConfig cfg;
    cfg.level = level;
    cfg.n_electrodes = L;
    for (int e = 1; e <= 2 * (level - 1); ++e) cfg.removed_electrodes.push_back(e);
    cfg.electrode_active.assign(static_cast<std::size_t>(L), 1);
    for (int e : cfg.removed_electrodes) {
        if (e <= L) cfg.electrode_active[static_cast<std::size_t>(e - 1)] = 0;
    }

    const auto pairs = challenge_injection_pairs(L);
    const int K = static_cast<int>(pairs.size());
    cfg.row_mask.assign(static_cast<std::size_t>(K * (L - 1)), 0);
    for (int k = 0; k < K; ++k) {
        const bool pattern_alive = cfg.electrode_active[static_cast<std::size_t>(pairs[k].src - 1)] &&
                                   cfg.electrode_active[static_cast<std::size_t>(pairs[k].dst - 1)];
        if (!pattern_alive) continue;
        cfg.active_patterns.push_back(k);
        for (int l = 1; l <= L - 1; ++l) {  // adjacent pair (l, l+1), 1-based
            if (cfg.electrode_active[static_cast<std::size_t>(l - 1)] &&
                cfg.electrode_active[static_cast<std::size_t>(l)]) {
                cfg.row_mask[static_cast<std::size_t>(k * (L - 1) + (l - 1))] = 1;
            }
        }
    }
    return cfg;
}

}  // namespace eit
