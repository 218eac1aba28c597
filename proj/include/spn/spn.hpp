#pragma once

// Umbrella header for the soft-proposal network library.

#include "spn/checkpoint.hpp"
#include "spn/error.hpp"
#include "spn/evaluate.hpp"
#include "spn/heatmap.hpp"
#include "spn/layers.hpp"
#include "spn/localization.hpp"
#include "spn/network.hpp"
#include "spn/optimizer.hpp"
#include "spn/oracles.hpp"
#include "spn/png_io.hpp"
#include "spn/rng.hpp"
#include "spn/soft_proposal.hpp"
#include "spn/synthdata.hpp"
#include "spn/tensor.hpp"
#include "spn/train.hpp"
