#pragma once

// Umbrella header for the ball-cluster-learning toolkit.

#include "bcl/dataset.hpp"
#include "bcl/geometry.hpp"
#include "bcl/gmeans.hpp"
#include "bcl/hac.hpp"
#include "bcl/kmeans.hpp"
#include "bcl/losses.hpp"
#include "bcl/metrics.hpp"
#include "bcl/mlp.hpp"
#include "bcl/numeric.hpp"
#include "bcl/trainer.hpp"
#include "bcl/xmeans.hpp"
