// Copyright 2026 The sofi authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SOFI_WAV_HPP
#define SOFI_WAV_HPP

#include <string>

#include "sofi/types.hpp"

namespace sofi {

/// Reads a mono WAV file (16-bit PCM or 32-bit IEEE float). Throws DataError
/// with a remediation hint for unsupported layouts.
AudioBuffer read_wav(const std::string& path);

/// Writes 16-bit PCM, mono, no dither. Samples are clipped to [-1, 1].
void write_wav(const std::string& path, const AudioBuffer& audio);

}  // namespace sofi

#endif  // SOFI_WAV_HPP
