#!/usr/bin/env python3
# Copyright 2026 The sinpaint Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""PESQ backend: pesq_backend.py REF.wav DEG.wav RATE prints one score.

Uses the `pesq` package (ITU-T P.862 reference code). Narrow-band mode by
default; set SINPAINT_PESQ_MODE=wb for wide-band.
"""
import os
import sys
import wave

import numpy as np
from pesq import pesq


def read_wav(path):
    with wave.open(path, "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        data = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
        return w.getframerate(), data.astype(np.float64)


def main(argv):
    if len(argv) != 4:
        print(__doc__, file=sys.stderr)
        return 2
    rate = int(argv[3])
    ref_rate, ref = read_wav(argv[1])
    deg_rate, deg = read_wav(argv[2])
    if ref_rate != rate or deg_rate != rate:
        print("sample rate mismatch", file=sys.stderr)
        return 2
    mode = os.environ.get("SINPAINT_PESQ_MODE", "nb")
    score = pesq(rate, ref, deg, mode)
    print(f"{score:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
