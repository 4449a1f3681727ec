#pragma once

#include "sier/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace sier::testing {

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    RandomStream rs(seed, 99);
    return sample_normal(rows, cols, 1.0, rs);
}

inline Matrix centered(const Matrix& m) { return m.rowwise() - m.colwise().mean(); }

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// Fresh scratch directory below the build tree.
inline std::filesystem::path work_dir(const std::string& name) {
    const std::filesystem::path dir = std::filesystem::path(SIER_TEST_WORKDIR) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace sier::testing
