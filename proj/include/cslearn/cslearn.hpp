#pragma once

// Cost-sensitive learning toolkit: calibrated losses for general gain
// matrices, confusion-matrix metrics with closed-form Bayes oracles, and
// reduction algorithms for non-decomposable objectives.

#include "cslearn/config.hpp"
#include "cslearn/dataset.hpp"
#include "cslearn/experiment.hpp"
#include "cslearn/gain_matrix.hpp"
#include "cslearn/grad_check.hpp"
#include "cslearn/losses.hpp"
#include "cslearn/metrics.hpp"
#include "cslearn/model.hpp"
#include "cslearn/numeric.hpp"
#include "cslearn/reductions.hpp"
#include "cslearn/rng.hpp"
#include "cslearn/synth.hpp"
#include "cslearn/train.hpp"
