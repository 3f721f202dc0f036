// Copyright (c) 2026 The diffaug Authors. All Rights Reserved.
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

#pragma once

#include "diffaug/bench.hpp"
#include "diffaug/data/bytes.hpp"
#include "diffaug/data/manifest.hpp"
#include "diffaug/data/sgrm.hpp"
#include "diffaug/data/synthetic.hpp"
#include "diffaug/data/wav.hpp"
#include "diffaug/denoisers/analytic.hpp"
#include "diffaug/denoisers/checkpoint.hpp"
#include "diffaug/denoisers/condnet.hpp"
#include "diffaug/denoisers/model.hpp"
#include "diffaug/diffusion.hpp"
#include "diffaug/dsp/effects.hpp"
#include "diffaug/dsp/mel.hpp"
#include "diffaug/dsp/policy.hpp"
#include "diffaug/dsp/stft.hpp"
#include "diffaug/dsp/waveform.hpp"
#include "diffaug/error.hpp"
#include "diffaug/numerics/adamw.hpp"
#include "diffaug/numerics/autodiff.hpp"
#include "diffaug/numerics/grid.hpp"
#include "diffaug/numerics/kernels.hpp"
#include "diffaug/numerics/rng.hpp"
#include "diffaug/numerics/tape.hpp"
#include "diffaug/samplers.hpp"
#include "diffaug/schedule.hpp"
#include "diffaug/selection.hpp"
