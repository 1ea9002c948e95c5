#pragma once

// Umbrella header for the camforge compiler and simulator library.

#include "camforge/arch.hpp"
#include "camforge/cam_passes.hpp"
#include "camforge/cim_passes.hpp"
#include "camforge/driver.hpp"
#include "camforge/interp.hpp"
#include "camforge/ir.hpp"
#include "camforge/kernel.hpp"
#include "camforge/parser.hpp"
#include "camforge/pass.hpp"
#include "camforge/pipeline.hpp"
#include "camforge/printer.hpp"
#include "camforge/registry.hpp"
#include "camforge/shapes.hpp"
#include "camforge/sim.hpp"
#include "camforge/sweep.hpp"
#include "camforge/tensor_io.hpp"
