// Copyright 2026 The Pathmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header for the sideband-lattice simulator. The time-domain oracle
// (pathmark/oracle.hpp) is not included here since it pulls in FFTW.

#pragma once

#include "pathmark/elements.hpp"
#include "pathmark/errors.hpp"
#include "pathmark/experiments.hpp"
#include "pathmark/netlist.hpp"
#include "pathmark/scenario.hpp"
#include "pathmark/spectral_state.hpp"
#include "pathmark/tsvf.hpp"

namespace pathmark {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pathmark
