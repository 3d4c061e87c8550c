#pragma once

#include "ig2i/attention.hpp"
#include "ig2i/autodiff.hpp"
#include "ig2i/checkpoint.hpp"
#include "ig2i/config.hpp"
#include "ig2i/diffusion.hpp"
#include "ig2i/error.hpp"
#include "ig2i/eval.hpp"
#include "ig2i/experiment.hpp"
#include "ig2i/guidance.hpp"
#include "ig2i/linalg.hpp"
#include "ig2i/matrix.hpp"
#include "ig2i/mmag.hpp"
#include "ig2i/parallel.hpp"
#include "ig2i/qformer.hpp"
#include "ig2i/rng.hpp"
#include "ig2i/sampling.hpp"
#include "ig2i/settings.hpp"
