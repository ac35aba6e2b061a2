#pragma once

#include "fetsgan/checkpoint.hpp"
#include "fetsgan/config.hpp"
#include "fetsgan/data.hpp"
#include "fetsgan/evaluation.hpp"
#include "fetsgan/layers.hpp"
#include "fetsgan/networks.hpp"
#include "fetsgan/objectives.hpp"
#include "fetsgan/optim.hpp"
#include "fetsgan/recurrent_models.hpp"
#include "fetsgan/spectral_norm.hpp"
#include "fetsgan/tensor.hpp"
#include "fetsgan/training.hpp"
