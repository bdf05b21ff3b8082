#ifndef TREENET_TREENET_HPP
#define TREENET_TREENET_HPP

#include "assembly.hpp"
#include "autoencoder.hpp"
#include "backbones.hpp"
#include "bridge.hpp"
#include "config.hpp"
#include "cost.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "orchestrator.hpp"
#include "profiler.hpp"

#endif // TREENET_TREENET_HPP
