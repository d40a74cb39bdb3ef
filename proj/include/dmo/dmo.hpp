#pragma once

#include "dmo/config.hpp"
#include "dmo/fft.hpp"
#include "dmo/grid.hpp"
#include "dmo/harness.hpp"
#include "dmo/image_io.hpp"
#include "dmo/metrics.hpp"
#include "dmo/mo.hpp"
#include "dmo/operators.hpp"
#include "dmo/prior.hpp"
#include "dmo/rng.hpp"
#include "dmo/samplers.hpp"
#include "dmo/schedule.hpp"
#include "dmo/synth.hpp"
#include "dmo/validate.hpp"
