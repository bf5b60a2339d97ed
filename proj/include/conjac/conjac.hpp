#pragma once

#include "adaptivity.hpp"
#include "assembly.hpp"
#include "boxgrid.hpp"
#include "common.hpp"
#include "condensation.hpp"
#include "contact.hpp"
#include "integrators.hpp"
#include "kinematics.hpp"
#include "materials.hpp"
#include "mesh.hpp"
#include "scene.hpp"
#include "simulation.hpp"
