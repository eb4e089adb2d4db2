#pragma once

#include "gbmm/channel_model.hpp"
#include "gbmm/experiment.hpp"
#include "gbmm/hybrid_design.hpp"
#include "gbmm/index_codec.hpp"
#include "gbmm/lower_bound_optimizer.hpp"
#include "gbmm/precoder_family.hpp"
#include "gbmm/random.hpp"
#include "gbmm/se_metrics.hpp"
#include "gbmm/serialization.hpp"
#include "gbmm/types.hpp"
#include "gbmm/upper_bound_optimizer.hpp"
#include "gbmm/version.hpp"
