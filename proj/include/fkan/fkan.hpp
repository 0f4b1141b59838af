#pragma once

#include "fkan/adam.hpp"
#include "fkan/array.hpp"
#include "fkan/baseline.hpp"
#include "fkan/checkpoint.hpp"
#include "fkan/dataset.hpp"
#include "fkan/image_io.hpp"
#include "fkan/io.hpp"
#include "fkan/metrics.hpp"
#include "fkan/model.hpp"
#include "fkan/signal.hpp"
#include "fkan/tape.hpp"
#include "fkan/train.hpp"
