#pragma once

#include "d2sm/conv.hpp"
#include "d2sm/dataset.hpp"
#include "d2sm/denoiser.hpp"
#include "d2sm/divergence.hpp"
#include "d2sm/error.hpp"
#include "d2sm/extractor.hpp"
#include "d2sm/grad_check.hpp"
#include "d2sm/kernel_density.hpp"
#include "d2sm/kv_file.hpp"
#include "d2sm/memory_queue.hpp"
#include "d2sm/metrics.hpp"
#include "d2sm/optim.hpp"
#include "d2sm/patch_sampler.hpp"
#include "d2sm/tensor.hpp"
#include "d2sm/tensor_io.hpp"
#include "d2sm/train.hpp"
