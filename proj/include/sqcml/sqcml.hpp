#pragma once

#include "sqcml/analysis.hpp"
#include "sqcml/checkpoint.hpp"
#include "sqcml/dataset.hpp"
#include "sqcml/lstm.hpp"
#include "sqcml/models.hpp"
#include "sqcml/sqc.hpp"
#include "sqcml/train.hpp"
