#!/usr/bin/env python3
"""Ishigami function behind the line protocol.

Reads lines of three space-separated inputs from stdin and writes one value
per line. Works for both one-shot and streaming use. Optional arguments:
a, b and an additive shift (defaults 7, 0.1, 0).
"""
import math
import sys


def main():
    args = [float(v) for v in sys.argv[1:]]
    a, b, shift = (args + [7.0, 0.1, 0.0][len(args):])[:3]
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        x1, x2, x3 = (float(v) for v in line.split())
        y = math.sin(x1) + a * math.sin(x2) ** 2 + b * x3 ** 4 * math.sin(x1) + shift
        sys.stdout.write(repr(y) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
