#pragma once

#include "ssdd/numkern/conv.hpp"
#include "ssdd/numkern/loss.hpp"
#include "ssdd/numkern/ops.hpp"
#include "ssdd/numkern/optim.hpp"
#include "ssdd/tensor.hpp"
