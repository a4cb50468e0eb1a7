#pragma once

#include "dsteval/model.hpp"
#include "dsteval/delta.hpp"
#include "dsteval/metrics.hpp"
#include "dsteval/analysis.hpp"
#include "dsteval/synth.hpp"
#include "dsteval/io.hpp"
