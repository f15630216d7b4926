#pragma once

// Umbrella header for the whole library.

#include "sslosr/ad.hpp"
#include "sslosr/batch.hpp"
#include "sslosr/dataset.hpp"
#include "sslosr/error.hpp"
#include "sslosr/eval.hpp"
#include "sslosr/experiment.hpp"
#include "sslosr/image.hpp"
#include "sslosr/losses.hpp"
#include "sslosr/nets.hpp"
#include "sslosr/optim.hpp"
#include "sslosr/rng.hpp"
#include "sslosr/split.hpp"
#include "sslosr/synth2d.hpp"
#include "sslosr/tensor_io.hpp"
#include "sslosr/train.hpp"
