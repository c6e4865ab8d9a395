#pragma once

#include "sgcn/checkpoint.hpp"
#include "sgcn/config.hpp"
#include "sgcn/corpus.hpp"
#include "sgcn/errors.hpp"
#include "sgcn/layers.hpp"
#include "sgcn/metrics.hpp"
#include "sgcn/model.hpp"
#include "sgcn/ops.hpp"
#include "sgcn/orthogonal.hpp"
#include "sgcn/tensor.hpp"
#include "sgcn/training.hpp"
