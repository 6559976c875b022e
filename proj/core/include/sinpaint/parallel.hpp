/*
Copyright 2026 The sinpaint Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstddef>
#include <functional>

namespace sinpaint {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions thrown
// by fn are rethrown on the calling thread (the one with the lowest index).
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace sinpaint
