#pragma once

#include "sumask/core.hpp"
#include "sumask/dataset.hpp"
#include "sumask/dispersion.hpp"
#include "sumask/errors.hpp"
#include "sumask/evaluation.hpp"
#include "sumask/gateway.hpp"
#include "sumask/hashing.hpp"
#include "sumask/http_providers.hpp"
#include "sumask/mapping.hpp"
#include "sumask/mock_providers.hpp"
#include "sumask/parallel.hpp"
#include "sumask/pipeline.hpp"
#include "sumask/prompting.hpp"
#include "sumask/response_cache.hpp"
#include "sumask/runner.hpp"
