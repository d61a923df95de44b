#pragma once

#include <spdlog/spdlog.h>

namespace choreo {

/// Shared stderr logger. Level comes from CHOREO_LOG_LEVEL (default "warn").
spdlog::logger& log();

}  // namespace choreo
