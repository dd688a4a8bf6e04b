// Copyright 2026 The reflectdit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace rdit {

// Element type of every tensor. The double build exists for gradient checking.
#ifdef RDIT_REAL_F64
using real = double;
#else
using real = float;
#endif

}  // namespace rdit
