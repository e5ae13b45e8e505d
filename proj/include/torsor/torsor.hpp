#pragma once

#include "torsor/conv.hpp"
#include "torsor/errors.hpp"
#include "torsor/groups.hpp"
#include "torsor/io.hpp"
#include "torsor/multiview.hpp"
#include "torsor/potential_graph.hpp"
#include "torsor/rng.hpp"
#include "torsor/sheaf.hpp"
#include "torsor/sync.hpp"
