#pragma once

#include "laax/error.hpp"
#include "laax/tensor.hpp"
#include "laax/random.hpp"
#include "laax/autograd.hpp"
#include "laax/ops.hpp"
#include "laax/nn.hpp"
#include "laax/synthesis.hpp"
#include "laax/vulnerability.hpp"
#include "laax/supervision.hpp"
#include "laax/efpn.hpp"
#include "laax/laa_net.hpp"
#include "laax/laa_former.hpp"
#include "laax/losses.hpp"
#include "laax/metrics.hpp"
#include "laax/io.hpp"
#include "laax/dataset.hpp"
#include "laax/config.hpp"
#include "laax/optim.hpp"
#include "laax/train.hpp"
#include "laax/saliency.hpp"
