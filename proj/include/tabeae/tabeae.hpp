#pragma once

#include "tabeae/autograd.hpp"
#include "tabeae/checkpoint.hpp"
#include "tabeae/config.hpp"
#include "tabeae/corpus.hpp"
#include "tabeae/error.hpp"
#include "tabeae/eval.hpp"
#include "tabeae/hungarian.hpp"
#include "tabeae/marking.hpp"
#include "tabeae/model.hpp"
#include "tabeae/optim.hpp"
#include "tabeae/pipeline.hpp"
#include "tabeae/plot.hpp"
#include "tabeae/prompts.hpp"
#include "tabeae/schemes.hpp"
#include "tabeae/span_select.hpp"
#include "tabeae/structure_mask.hpp"
#include "tabeae/synth.hpp"
#include "tabeae/table.hpp"
#include "tabeae/tokenizer.hpp"
