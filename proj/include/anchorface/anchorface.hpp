#pragma once

#include "anchorface/aggregate.hpp"
#include "anchorface/anchors.hpp"
#include "anchorface/data.hpp"
#include "anchorface/error.hpp"
#include "anchorface/experiment.hpp"
#include "anchorface/image.hpp"
#include "anchorface/kmeans.hpp"
#include "anchorface/losses.hpp"
#include "anchorface/metrics.hpp"
#include "anchorface/model.hpp"
#include "anchorface/net.hpp"
#include "anchorface/optim.hpp"
#include "anchorface/random.hpp"
#include "anchorface/shape.hpp"
#include "anchorface/svg.hpp"
#include "anchorface/train.hpp"
