#pragma once

#include "gfpack/autodiff.hpp"
#include "gfpack/collision.hpp"
#include "gfpack/dataset.hpp"
#include "gfpack/diffusion.hpp"
#include "gfpack/enhancement.hpp"
#include "gfpack/geometry.hpp"
#include "gfpack/io.hpp"
#include "gfpack/parallel.hpp"
#include "gfpack/random.hpp"
#include "gfpack/render.hpp"
#include "gfpack/scoremodel.hpp"
#include "gfpack/teacher.hpp"
