#pragma once

#include "vrd/checkpoint.hpp"
#include "vrd/corpus.hpp"
#include "vrd/embeddings.hpp"
#include "vrd/error.hpp"
#include "vrd/evaluation.hpp"
#include "vrd/features.hpp"
#include "vrd/geometry.hpp"
#include "vrd/linear.hpp"
#include "vrd/models.hpp"
#include "vrd/random.hpp"
#include "vrd/report.hpp"
#include "vrd/training.hpp"
