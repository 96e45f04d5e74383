#pragma once

#include "u3m/augment.hpp"
#include "u3m/checkpoint.hpp"
#include "u3m/config.hpp"
#include "u3m/dataset.hpp"
#include "u3m/encoder.hpp"
#include "u3m/error.hpp"
#include "u3m/fusion.hpp"
#include "u3m/gradcheck.hpp"
#include "u3m/gradcheck_suite.hpp"
#include "u3m/head.hpp"
#include "u3m/loss.hpp"
#include "u3m/metrics.hpp"
#include "u3m/model.hpp"
#include "u3m/netpbm.hpp"
#include "u3m/ops.hpp"
#include "u3m/optim.hpp"
#include "u3m/params.hpp"
#include "u3m/rng.hpp"
#include "u3m/segmap.hpp"
#include "u3m/synth.hpp"
#include "u3m/tape.hpp"
#include "u3m/tensor.hpp"
#include "u3m/train.hpp"
