#pragma once

#include "nsm/assist.hpp"
#include "nsm/config.hpp"
#include "nsm/dataset.hpp"
#include "nsm/error.hpp"
#include "nsm/gradcheck.hpp"
#include "nsm/interpreter.hpp"
#include "nsm/kb.hpp"
#include "nsm/model.hpp"
#include "nsm/program.hpp"
#include "nsm/programmer.hpp"
#include "nsm/tape.hpp"
#include "nsm/taskgen.hpp"
#include "nsm/tensor.hpp"
#include "nsm/trainer.hpp"
#include "nsm/value.hpp"
