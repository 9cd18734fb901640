#pragma once

#include "lrtd/cp_dist.hpp"
#include "lrtd/dataset.hpp"
#include "lrtd/error.hpp"
#include "lrtd/eval.hpp"
#include "lrtd/feature_net.hpp"
#include "lrtd/gradcheck.hpp"
#include "lrtd/math.hpp"
#include "lrtd/prior.hpp"
#include "lrtd/rng.hpp"
#include "lrtd/tensor.hpp"
#include "lrtd/trainer.hpp"
