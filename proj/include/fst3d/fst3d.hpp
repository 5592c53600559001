#pragma once

#include "fst3d/classifier.hpp"
#include "fst3d/conv.hpp"
#include "fst3d/error.hpp"
#include "fst3d/filterbank.hpp"
#include "fst3d/gridsearch.hpp"
#include "fst3d/hsi_io.hpp"
#include "fst3d/metrics.hpp"
#include "fst3d/parallel.hpp"
#include "fst3d/rng.hpp"
#include "fst3d/sampling.hpp"
#include "fst3d/scatter.hpp"
#include "fst3d/volume.hpp"

namespace fst3d {
inline constexpr const char* kVersion = "0.1.0";
}
