#pragma once

#include "licaf/ablation.hpp"
#include "licaf/acca.hpp"
#include "licaf/backbone.hpp"
#include "licaf/config.hpp"
#include "licaf/datagen.hpp"
#include "licaf/eval.hpp"
#include "licaf/gradcheck.hpp"
#include "licaf/head.hpp"
#include "licaf/ictm.hpp"
#include "licaf/io.hpp"
#include "licaf/network.hpp"
#include "licaf/nn.hpp"
#include "licaf/optim.hpp"
#include "licaf/rng.hpp"
#include "licaf/strategy.hpp"
#include "licaf/tensor.hpp"
#include "licaf/trainer.hpp"
