#pragma once

#include "reallm/bitpack.hpp"
#include "reallm/budget.hpp"
#include "reallm/compress.hpp"
#include "reallm/container.hpp"
#include "reallm/decoder.hpp"
#include "reallm/errors.hpp"
#include "reallm/finetune.hpp"
#include "reallm/generators.hpp"
#include "reallm/half.hpp"
#include "reallm/lowrank.hpp"
#include "reallm/matrix.hpp"
#include "reallm/matrix_io.hpp"
#include "reallm/nf_quant.hpp"
#include "reallm/patch.hpp"
#include "reallm/permute.hpp"
#include "reallm/quantizer.hpp"
#include "reallm/rational.hpp"
#include "reallm/svd.hpp"
#include "reallm/vq.hpp"
