#pragma once

#include "noctis/assignment.hpp"
#include "noctis/descriptor.hpp"
#include "noctis/descriptor_store.hpp"
#include "noctis/error.hpp"
#include "noctis/evaluation.hpp"
#include "noctis/rle.hpp"
#include "noctis/scoring.hpp"
#include "noctis/similarity.hpp"
#include "noctis/synth.hpp"
