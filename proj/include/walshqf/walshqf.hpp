#pragma once

#include "walshqf/errors.hpp"
#include "walshqf/dyadic.hpp"
#include "walshqf/geometry.hpp"
#include "walshqf/step_function.hpp"
#include "walshqf/packets.hpp"
#include "walshqf/forest.hpp"
#include "walshqf/quartile_form.hpp"
#include "walshqf/decomposition.hpp"
