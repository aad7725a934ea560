"""Regenerates micro_wp4_trace.csv without using the Rust code.

Operands and results of single-precision operations are chopped to 4
significand bits (1 implicit + 3 stored) by masking the IEEE-754 encoding;
double-precision operations run untouched because the target width is single.

    python3 micro_trace.py > micro_wp4_trace.csv
"""

import struct

import numpy as np

K = 4


def f32_bits(x):
    return struct.unpack("<I", struct.pack("<f", np.float32(x)))[0]


def bits_f32(b):
    return np.float32(struct.unpack("<f", struct.pack("<I", b))[0])


def f64_bits(x):
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def chop32(x):
    drop = 24 - K
    return bits_f32(f32_bits(x) & ~((1 << drop) - 1) & 0xFFFFFFFF)


OPS = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
}

lines = ["# precis-csv v1", "scope,op,width,a_hex,b_hex,r_hex"]


def single(op, a, b):
    a, b = chop32(a), chop32(b)
    r = chop32(np.float32(OPS[op](a, b)))
    lines.append(f"micro,{op},single,{f32_bits(a):08x},{f32_bits(b):08x},{f32_bits(r):08x}")
    return r


def double(op, a, b):
    r = OPS[op](float(a), float(b))
    lines.append(f"micro_inner,{op},double,{f64_bits(a):016x},{f64_bits(b):016x},{f64_bits(r):016x}")
    return r


s = [np.float32(v) for v in (1.0, 1.0, 0.1, 0.1, 3.14159, 1.41421, 1.0, 3.0)]
r1 = single("add", s[0], s[1])
r2 = single("mul", s[2], s[3])
r3 = single("sub", s[4], s[5])
r4 = single("div", s[6], s[7])
r5 = single("add", r2, r4)

d = (0.1, 0.2, 2.718281828, 1.5, 10.0, 7.0, 0.3)
r6 = double("add", d[0], d[1])
r7 = double("mul", d[2], d[3])
r8 = double("div", d[4], d[5])
r9 = double("sub", r6, d[6])
r10 = double("mul", r8, r7)

print("\n".join(lines))
