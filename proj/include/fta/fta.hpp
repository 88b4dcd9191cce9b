#pragma once

#include "fta/benchmark.hpp"
#include "fta/datagen.hpp"
#include "fta/encoder.hpp"
#include "fta/error.hpp"
#include "fta/fusion.hpp"
#include "fta/index.hpp"
#include "fta/linalg.hpp"
#include "fta/rng.hpp"
#include "fta/training.hpp"
#include "fta/transport.hpp"
#include "fta/view_set.hpp"
