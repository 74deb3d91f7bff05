"""Seeded random affine loop nests for property tests.

Subscripts carry a constant offset and arrays are oversized, so every
generated program can also be interpreted without bounds errors.
"""
from __future__ import annotations

import random

ITERS = ("i", "j", "k")
OFFSET = 16


def _subscript(rng: random.Random, iters) -> str:
    terms = []
    for it in rng.sample(list(iters), k=min(len(iters), rng.randint(1, 2))):
        c = rng.choice((-1, 1, 1, 2))
        terms.append((c, it))
    text = ""
    for c, it in terms:
        mag = it if abs(c) == 1 else f"{abs(c)} * {it}"
        if not text:
            text = mag if c > 0 else f"-{mag}"
        else:
            text += f" {'+' if c > 0 else '-'} {mag}"
    k = rng.randint(-1, 1) + OFFSET
    return f"{text} + {k}"


def _ref(rng, name, rank, iters) -> str:
    return name + "".join(f"[{_subscript(rng, iters)}]" for _ in range(rank))


def _bounds(rng, outer) -> tuple[str, str]:
    lows = ["0", "1"]
    ups = ["n", "n - 1"]
    if outer:
        o = rng.choice(outer)
        lows += [o, f"{o} + 1"]
        ups += [f"{o} + 2", f"n - {o}"]
    return rng.choice(lows), rng.choice(ups)


def random_program(seed: int, max_depth: int = 3, max_stmts: int = 3) -> str:
    """DSL source of one random nest (depth <= 3, <= 3 statements)."""
    rng = random.Random(seed)
    ranks = {"a": rng.randint(1, 2), "b": rng.randint(1, 2)}
    budget = [rng.randint(1, max_stmts)]
    lines = ["param n;"]
    for name, rank in ranks.items():
        lines.append(f"array {name}" + "[8 * n + 40]" * rank + ";")

    def stmt(iters, indent):
        target = rng.choice("ab")
        reads = []
        for _ in range(rng.randint(1, 2)):
            x = rng.choice("ab")
            reads.append(_ref(rng, x, ranks[x], iters))
        value = " + ".join(reads) + " * 0.5 + 1.0"
        return [" " * indent + f"{_ref(rng, target, ranks[target], iters)} = {value};"]

    def loop(level, outer, indent):
        it = ITERS[level]
        lo, hi = _bounds(rng, outer)
        body = []
        inner = outer + [it]
        for _ in range(rng.randint(1, 2)):
            if budget[0] <= 0:
                break
            if level + 1 < max_depth and rng.random() < 0.55:
                body += loop(level + 1, inner, indent + 4)
            else:
                budget[0] -= 1
                body += stmt(inner, indent + 4)
        if not body:
            budget[0] -= 1
            body = stmt(inner, indent + 4)
        return [" " * indent + f"for {it} in {lo}..{hi} {{"] + body + [" " * indent + "}"]

    lines += loop(0, [], 0)
    return "\n".join(lines) + "\n"


def random_params(seed: int) -> dict[str, int]:
    return {"n": random.Random(seed * 7919 + 1).randint(2, 6)}
