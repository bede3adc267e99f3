#pragma once

#include "fragtree/rng.hpp"
#include "fragtree/errors.hpp"
#include "fragtree/partitions.hpp"
#include "fragtree/dislocation.hpp"
#include "fragtree/measure_io.hpp"
#include "fragtree/engine.hpp"
#include "fragtree/trace_io.hpp"
#include "fragtree/genealogy.hpp"
#include "fragtree/height.hpp"
#include "fragtree/stats.hpp"
#include "fragtree/estimators.hpp"
