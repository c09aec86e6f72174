// Umbrella header.

#ifndef KOOPDET_KOOPDET_HPP
#define KOOPDET_KOOPDET_HPP

#include "koopdet/attacks.hpp"
#include "koopdet/clustering.hpp"
#include "koopdet/detector.hpp"
#include "koopdet/errors.hpp"
#include "koopdet/frame.hpp"
#include "koopdet/gridsim.hpp"
#include "koopdet/io.hpp"
#include "koopdet/koopman.hpp"
#include "koopdet/pipeline.hpp"
#include "koopdet/rng.hpp"
#include "koopdet/scenario.hpp"

#endif  // KOOPDET_KOOPDET_HPP
