#pragma once

#include "hbmp/analysis.hpp"
#include "hbmp/checkpoint.hpp"
#include "hbmp/config.hpp"
#include "hbmp/data.hpp"
#include "hbmp/encoders.hpp"
#include "hbmp/gradcheck.hpp"
#include "hbmp/inference.hpp"
#include "hbmp/model.hpp"
#include "hbmp/nli_head.hpp"
#include "hbmp/pipeline_check.hpp"
#include "hbmp/ops.hpp"
#include "hbmp/random.hpp"
#include "hbmp/recurrent.hpp"
#include "hbmp/run.hpp"
#include "hbmp/synth.hpp"
#include "hbmp/tensor.hpp"
#include "hbmp/training.hpp"
