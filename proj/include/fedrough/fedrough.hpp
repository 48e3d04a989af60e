#pragma once

#include "fedrough/algorithms.hpp"
#include "fedrough/config.hpp"
#include "fedrough/csv.hpp"
#include "fedrough/data.hpp"
#include "fedrough/errors.hpp"
#include "fedrough/harness.hpp"
#include "fedrough/model.hpp"
#include "fedrough/param_vector.hpp"
#include "fedrough/rng.hpp"
#include "fedrough/roughness.hpp"
