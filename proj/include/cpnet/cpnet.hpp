#pragma once

#include "cpnet/complexity.hpp"
#include "cpnet/config.hpp"
#include "cpnet/data.hpp"
#include "cpnet/error.hpp"
#include "cpnet/experiment.hpp"
#include "cpnet/frames.hpp"
#include "cpnet/gradcheck.hpp"
#include "cpnet/models.hpp"
#include "cpnet/ops.hpp"
#include "cpnet/rng.hpp"
#include "cpnet/scoring.hpp"
#include "cpnet/serialize.hpp"
#include "cpnet/tensor.hpp"
#include "cpnet/training.hpp"
