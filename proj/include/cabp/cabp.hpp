#pragma once

#include "cabp/analysis.hpp"
#include "cabp/autograd.hpp"
#include "cabp/checkpoint.hpp"
#include "cabp/commands.hpp"
#include "cabp/compression.hpp"
#include "cabp/config.hpp"
#include "cabp/data.hpp"
#include "cabp/error.hpp"
#include "cabp/gemm.hpp"
#include "cabp/ledger.hpp"
#include "cabp/math.hpp"
#include "cabp/memory_model.hpp"
#include "cabp/model.hpp"
#include "cabp/optim.hpp"
#include "cabp/tape.hpp"
#include "cabp/tensor.hpp"
#include "cabp/train.hpp"
