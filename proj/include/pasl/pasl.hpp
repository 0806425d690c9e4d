#pragma once

#include "pasl/core.hpp"
#include "pasl/act_io.hpp"
#include "pasl/region_discovery.hpp"
#include "pasl/layout_builder.hpp"
#include "pasl/node_features.hpp"
#include "pasl/layout_graph.hpp"
#include "pasl/lgn.hpp"
#include "pasl/pipeline.hpp"
#include "pasl/synthetic.hpp"
#include "pasl/training.hpp"
#include "pasl/gradcheck.hpp"
