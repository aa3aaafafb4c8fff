#pragma once

#include "ioncavity/error.hpp"
#include "ioncavity/units.hpp"
#include "ioncavity/linalg.hpp"
#include "ioncavity/atomic.hpp"
#include "ioncavity/config.hpp"
#include "ioncavity/model.hpp"
#include "ioncavity/dynamics.hpp"
#include "ioncavity/fitting.hpp"
#include "ioncavity/parallel.hpp"
#include "ioncavity/spectroscopy.hpp"
#include "ioncavity/analysis.hpp"

namespace ioncavity {

inline constexpr const char* version = "0.1.0";

}  // namespace ioncavity
