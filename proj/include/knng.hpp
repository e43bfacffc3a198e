#pragma once

#include "knng/ballot.hpp"
#include "knng/bench.hpp"
#include "knng/dataset.hpp"
#include "knng/distance.hpp"
#include "knng/error.hpp"
#include "knng/knng.hpp"
#include "knng/multiselect.hpp"
#include "knng/parallel.hpp"
