// Copyright 2026 The bbmlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#ifndef BBMLAB_BBMLAB_HPP_
#define BBMLAB_BBMLAB_HPP_

#include "bbmlab/rng.hpp"
#include "bbmlab/error.hpp"
#include "bbmlab/numeric.hpp"
#include "bbmlab/bbm_sim.hpp"
#include "bbmlab/genealogy.hpp"
#include "bbmlab/martingale.hpp"
#include "bbmlab/point_process.hpp"
#include "bbmlab/stats.hpp"
#include "bbmlab/fkpp.hpp"
#include "bbmlab/io.hpp"

#endif  // BBMLAB_BBMLAB_HPP_
