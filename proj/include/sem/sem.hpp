#pragma once

#include "sem/types.hpp"
#include "sem/xml.hpp"
#include "sem/soap_codec.hpp"
#include "sem/param_trie.hpp"
#include "sem/bounded_queue.hpp"
#include "sem/windowing.hpp"
#include "sem/dedup_engine.hpp"
#include "sem/gate.hpp"
#include "sem/csv.hpp"
#include "sem/metrics.hpp"
#include "sem/http.hpp"
#include "sem/proxy_core.hpp"
#include "sem/config.hpp"
#include "sem/harness.hpp"
