#pragma once

#include "fermat/numerics.hpp"
#include "fermat/kdtree.hpp"
#include "fermat/density.hpp"
#include "fermat/em.hpp"
#include "fermat/geometry.hpp"
#include "fermat/graph.hpp"
#include "fermat/datasets.hpp"
#include "fermat/io.hpp"
#include "fermat/experiments.hpp"
