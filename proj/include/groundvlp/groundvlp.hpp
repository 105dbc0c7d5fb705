#pragma once

// Umbrella header.

#include "groundvlp/bundle.hpp"
#include "groundvlp/category.hpp"
#include "groundvlp/error.hpp"
#include "groundvlp/eval.hpp"
#include "groundvlp/fixture_io.hpp"
#include "groundvlp/fusion.hpp"
#include "groundvlp/geometry.hpp"
#include "groundvlp/gradcam.hpp"
#include "groundvlp/heatmap.hpp"
#include "groundvlp/matrix.hpp"
#include "groundvlp/parse_tree.hpp"
