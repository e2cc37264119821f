#pragma once

#include "intentaug/app.hpp"
#include "intentaug/config.hpp"
#include "intentaug/corpus.hpp"
#include "intentaug/detector.hpp"
#include "intentaug/disambiguator.hpp"
#include "intentaug/embedding.hpp"
#include "intentaug/error.hpp"
#include "intentaug/http_transport.hpp"
#include "intentaug/ledger.hpp"
#include "intentaug/metrics.hpp"
#include "intentaug/mock_providers.hpp"
#include "intentaug/parallel.hpp"
#include "intentaug/prompts.hpp"
#include "intentaug/providers.hpp"
#include "intentaug/random.hpp"
#include "intentaug/reporting.hpp"
#include "intentaug/util.hpp"
