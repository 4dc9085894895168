#pragma once

#include "hcaecs/error.hpp"
#include "hcaecs/dataset.hpp"
#include "hcaecs/autoencoder.hpp"
#include "hcaecs/distance.hpp"
#include "hcaecs/hier_cluster.hpp"
#include "hcaecs/model_selection.hpp"
#include "hcaecs/pipeline.hpp"
