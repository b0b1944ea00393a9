#pragma once

#include "ddf/vec.hpp"
#include "ddf/mesh.hpp"
#include "ddf/shapes.hpp"
#include "ddf/rng.hpp"
#include "ddf/parallel.hpp"
#include "ddf/bvh.hpp"
#include "ddf/field.hpp"
#include "ddf/sampler.hpp"
#include "ddf/mlp.hpp"
#include "ddf/neural_field.hpp"
#include "ddf/render.hpp"
#include "ddf/reconstruction.hpp"
#include "ddf/metrics.hpp"
#include "ddf/pipeline.hpp"
