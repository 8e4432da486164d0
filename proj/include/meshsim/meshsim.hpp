#pragma once

#include "meshsim/calibration.hpp"
#include "meshsim/compiler.hpp"
#include "meshsim/errors.hpp"
#include "meshsim/matrix.hpp"
#include "meshsim/mesh.hpp"
#include "meshsim/quantum.hpp"
#include "meshsim/random.hpp"
#include "meshsim/targets.hpp"
