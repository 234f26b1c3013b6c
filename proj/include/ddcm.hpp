#pragma once

#include "ddcm/bitio.hpp"
#include "ddcm/bitstream.hpp"
#include "ddcm/chacha20.hpp"
#include "ddcm/codebook.hpp"
#include "ddcm/codec.hpp"
#include "ddcm/codec_config.hpp"
#include "ddcm/conditional.hpp"
#include "ddcm/diffusion.hpp"
#include "ddcm/error.hpp"
#include "ddcm/experiments.hpp"
#include "ddcm/gmm.hpp"
#include "ddcm/hash.hpp"
#include "ddcm/linear_operator.hpp"
#include "ddcm/metrics.hpp"
#include "ddcm/model.hpp"
#include "ddcm/rng.hpp"
#include "ddcm/sampler.hpp"
#include "ddcm/schedule.hpp"
#include "ddcm/selection.hpp"
#include "ddcm/signal_io.hpp"
#include "ddcm/vec.hpp"
#include "ddcm/wire.hpp"
