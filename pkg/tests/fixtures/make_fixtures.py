"""Regenerate the bit-exact raster fixtures in this directory.

    python tests/fixtures/make_fixtures.py

The generator is deterministic; tests check that rerunning it reproduces
the committed bytes.
"""

import os
import struct

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))


def psrk_bytes(counts, bit_depth):
    h, w, c = counts.shape
    return struct.pack("<4s4I", b"PSRK", h, w, c, bit_depth) + counts.astype("<u2").tobytes()


def fixtures():
    rng = np.random.default_rng(20240611)
    pan = rng.integers(0, 4096, size=(128, 128, 1), dtype=np.uint16)
    pan[0, 0, 0], pan[0, 1, 0], pan[0, 2, 0] = 0, 2048, 4095
    ms = rng.integers(0, 4096, size=(32, 32, 4), dtype=np.uint16)
    ramp = (np.arange(8)[:, None] * 100 + np.arange(8)[None, :] * 30).astype(np.uint16)[:, :, None]
    out = {
        "pan_128_12bit.psrk": psrk_bytes(pan, 12),
        "ms_32x4_12bit.psrk": psrk_bytes(ms, 12),
        "ramp_8_12bit.psrk": psrk_bytes(ramp, 12),
        # header promises 4x4x4 but the payload only holds 3 bands
        "truncated_4band.psrk": psrk_bytes(ms[:4, :4], 12)[: 20 + 4 * 4 * 3 * 2],
    }
    return out


def main():
    for name, data in fixtures().items():
        with open(os.path.join(HERE, name), "wb") as fh:
            fh.write(data)


if __name__ == "__main__":
    main()
