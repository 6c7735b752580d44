#pragma once

// Umbrella header.

#include "vgsi/aggregator.hpp"
#include "vgsi/checkpoint.hpp"
#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/error.hpp"
#include "vgsi/evaluator.hpp"
#include "vgsi/gradcheck.hpp"
#include "vgsi/keyframes.hpp"
#include "vgsi/models.hpp"
#include "vgsi/optimizer.hpp"
#include "vgsi/quiz.hpp"
#include "vgsi/rng.hpp"
#include "vgsi/sampler.hpp"
#include "vgsi/synthetic.hpp"
#include "vgsi/trainer.hpp"
#include "vgsi/transfer.hpp"
