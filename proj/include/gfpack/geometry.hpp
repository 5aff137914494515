#pragma once

#include "gfpack/geometry/primitives.hpp"
#include "gfpack/geometry/boolean.hpp"
#include "gfpack/geometry/utilization.hpp"
