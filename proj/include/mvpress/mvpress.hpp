#pragma once

#include "mvpress/error.hpp"
#include "mvpress/eval.hpp"
#include "mvpress/ingest.hpp"
#include "mvpress/merge.hpp"
#include "mvpress/model.hpp"
#include "mvpress/parallel.hpp"
#include "mvpress/pipeline.hpp"
#include "mvpress/prune.hpp"
#include "mvpress/retrieve.hpp"
#include "mvpress/rng.hpp"
