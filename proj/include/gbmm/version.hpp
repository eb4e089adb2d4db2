#pragma once

#define GBMM_VERSION_MAJOR 0
#define GBMM_VERSION_MINOR 1
#define GBMM_VERSION_PATCH 0

namespace gbmm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gbmm
