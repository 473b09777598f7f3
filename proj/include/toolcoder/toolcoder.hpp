#pragma once

#include "annotation.hpp"
#include "config.hpp"
#include "doc_index.hpp"
#include "eval.hpp"
#include "generators.hpp"
#include "grammar.hpp"
#include "lora.hpp"
#include "orchestrator.hpp"
#include "sandbox.hpp"
#include "search_tools.hpp"
#include "text.hpp"
