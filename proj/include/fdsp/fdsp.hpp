/*
 * Copyright 2026 The FDSP Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "fdsp/config.hpp"
#include "fdsp/datagen.hpp"
#include "fdsp/dsp.hpp"
#include "fdsp/encoder.hpp"
#include "fdsp/errors.hpp"
#include "fdsp/evalhub.hpp"
#include "fdsp/fed/aggregate.hpp"
#include "fdsp/fed/message.hpp"
#include "fdsp/fed/partition.hpp"
#include "fdsp/fed/round.hpp"
#include "fdsp/hash.hpp"
#include "fdsp/numcore.hpp"
#include "fdsp/pipeline.hpp"
#include "fdsp/promptgan.hpp"
