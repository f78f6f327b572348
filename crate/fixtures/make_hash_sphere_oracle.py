"""Reference vectors for the mock gateway's hash-to-sphere embedding.

Block c of the stream is sha256(seed_le64 | len(space)_le32 | space |
len(text)_le32 | text | c_le32). Each block yields four u64 words (little
endian); word w maps to a uniform (w >> 11 + 0.5) / 2**53. Consecutive
uniform pairs (u1, u2) become two normals via Box-Muller:
sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2). The first `dim` normals are
L2-normalized.
"""
import hashlib
import json
import math
import struct
import sys

SEED = 0x5EED


def uniforms(seed, space, text):
    s = space.encode()
    t = text.encode()
    c = 0
    while True:
        h = hashlib.sha256(
            struct.pack("<Q", seed) + struct.pack("<I", len(s)) + s + struct.pack("<I", len(t)) + t + struct.pack("<I", c)
        ).digest()
        for i in range(4):
            (w,) = struct.unpack("<Q", h[8 * i : 8 * i + 8])
            yield ((w >> 11) + 0.5) / 2.0**53
        c += 1


def hash_to_sphere(seed, space, text, dim):
    out = []
    u = uniforms(seed, space, text)
    while len(out) < dim:
        u1, u2 = next(u), next(u)
        r = math.sqrt(-2.0 * math.log(u1))
        out.append(r * math.cos(2.0 * math.pi * u2))
        out.append(r * math.sin(2.0 * math.pi * u2))
    out = out[:dim]
    n = math.sqrt(sum(v * v for v in out))
    return [v / n for v in out]


CASES = [
    ("all-MiniLM-L6-v2", "A cyclist is riding down a city street.", 128),
    ("all-MiniLM-L6-v2", "", 8),
    ("clip-vit-b-32", "street", 5),
    ("space", "Grüße aus Trier", 3),
]

if __name__ == "__main__":
    cases = [
        {"seed": SEED, "space": sp, "text": t, "dim": d, "vector": hash_to_sphere(SEED, sp, t, d)}
        for sp, t, d in CASES
    ]
    json.dump({"cases": cases}, sys.stdout, indent=1)
    sys.stdout.write("\n")
