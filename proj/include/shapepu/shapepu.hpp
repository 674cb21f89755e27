#pragma once

#include "augment.hpp"
#include "autodiff.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "gradcheck.hpp"
#include "grid.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "mixture_em.hpp"
#include "model.hpp"
#include "pgm_io.hpp"
#include "phantom.hpp"
#include "pu_partition.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "trainer.hpp"
#include "util.hpp"
