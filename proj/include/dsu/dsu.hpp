#pragma once

#include "dsu/analysis.hpp"
#include "dsu/config.hpp"
#include "dsu/convert.hpp"
#include "dsu/data.hpp"
#include "dsu/error.hpp"
#include "dsu/ica.hpp"
#include "dsu/kmeans.hpp"
#include "dsu/linalg.hpp"
#include "dsu/matrix.hpp"
#include "dsu/pipeline.hpp"
#include "dsu/preprocess.hpp"
#include "dsu/rng.hpp"
#include "dsu/transform_io.hpp"
#include "dsu/units.hpp"
