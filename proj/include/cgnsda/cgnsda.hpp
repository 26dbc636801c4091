#pragma once

#include "cgnsda/em.hpp"
#include "cgnsda/errors.hpp"
#include "cgnsda/filter.hpp"
#include "cgnsda/info.hpp"
#include "cgnsda/model.hpp"
#include "cgnsda/models.hpp"
#include "cgnsda/online.hpp"
#include "cgnsda/rng.hpp"
#include "cgnsda/smoother.hpp"
#include "cgnsda/trajectory.hpp"
