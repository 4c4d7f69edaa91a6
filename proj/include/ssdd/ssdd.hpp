#pragma once

#include "ssdd/benchdata.hpp"
#include "ssdd/commands.hpp"
#include "ssdd/core.hpp"
#include "ssdd/densecrf.hpp"
#include "ssdd/eval.hpp"
#include "ssdd/fileio.hpp"
#include "ssdd/image.hpp"
#include "ssdd/masks.hpp"
#include "ssdd/nets.hpp"
#include "ssdd/numkern.hpp"
#include "ssdd/parallel.hpp"
#include "ssdd/pipeline.hpp"
#include "ssdd/tensor.hpp"
