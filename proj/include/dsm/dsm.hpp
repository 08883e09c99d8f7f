#pragma once

#include "dsm/contraction.hpp"
#include "dsm/errors.hpp"
#include "dsm/flow.hpp"
#include "dsm/operator.hpp"
#include "dsm/problems.hpp"
#include "dsm/regpath.hpp"
#include "dsm/rng.hpp"
#include "dsm/serialize.hpp"
#include "dsm/space.hpp"
