#pragma once

// Umbrella header.

#include "hypercl/cache.hpp"
#include "hypercl/checkpoint.hpp"
#include "hypercl/data_io.hpp"
#include "hypercl/encoder.hpp"
#include "hypercl/error.hpp"
#include "hypercl/eval.hpp"
#include "hypercl/hypernet.hpp"
#include "hypercl/log.hpp"
#include "hypercl/losses.hpp"
#include "hypercl/model.hpp"
#include "hypercl/numeric.hpp"
#include "hypercl/optim.hpp"
#include "hypercl/random.hpp"
#include "hypercl/synthetic.hpp"
#include "hypercl/trainer.hpp"
