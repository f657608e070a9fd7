"""Reference OSC pattern matcher: plain backtracking over characters, no regex.

Written separately from the package matcher so the two can be compared on
a generated universe of patterns and addresses.
"""

import random

ALPHABET = "ab123"


def _class_matches(body, ch):
    negate = body.startswith("!")
    if negate:
        body = body[1:]
    hit = False
    i = 0
    while i < len(body):
        if i + 2 < len(body) and body[i + 1] == "-":
            lo, hi = sorted((body[i], body[i + 2]))
            if lo <= ch <= hi:
                hit = True
            i += 3
        else:
            if body[i] == ch:
                hit = True
            i += 1
    return hit != negate


def oracle_match(pattern, address):
    def walk(p, a):
        if p == len(pattern):
            return a == len(address)
        c = pattern[p]
        if c == "*":
            # try every run length that stays inside the current segment
            k = a
            while True:
                if walk(p + 1, k):
                    return True
                if k == len(address) or address[k] == "/":
                    return False
                k += 1
        if c == "?":
            return a < len(address) and address[a] != "/" and walk(p + 1, a + 1)
        if c == "[":
            end = pattern.index("]", p)
            if a < len(address) and address[a] != "/" and _class_matches(pattern[p + 1 : end], address[a]):
                return walk(end + 1, a + 1)
            return False
        if c == "{":
            end = pattern.index("}", p)
            for choice in pattern[p + 1 : end].split(","):
                if address.startswith(choice, a) and walk(end + 1, a + len(choice)):
                    return True
            return False
        return a < len(address) and address[a] == c and walk(p + 1, a + 1)

    return walk(0, 0)


def _token(rng):
    kind = rng.randrange(6)
    if kind == 0:
        return rng.choice(ALPHABET)
    if kind == 1:
        return "?"
    if kind == 2:
        return "*"
    if kind == 3:
        lo, hi = sorted(rng.sample(ALPHABET, 2))
        return rng.choice([f"[{lo}-{hi}]", f"[!{lo}-{hi}]", f"[{lo}{hi}]", f"[!{lo}]"])
    if kind == 4:
        choices = {"".join(rng.choices(ALPHABET, k=rng.randint(1, 2))) for _ in range(rng.randint(1, 3))}
        return "{" + ",".join(sorted(choices)) + "}"
    return rng.choice(ALPHABET) * 2


def generate_patterns(n, seed=0):
    rng = random.Random(seed)
    out = set()
    while len(out) < n:
        segments = ["".join(_token(rng) for _ in range(rng.randint(1, 3))) for _ in range(rng.randint(1, 3))]
        out.add("/" + "/".join(segments))
    return sorted(out)


def generate_addresses(n, seed=1):
    rng = random.Random(seed)
    out = set()
    while len(out) < n:
        segments = ["".join(rng.choices(ALPHABET, k=rng.randint(1, 3))) for _ in range(rng.randint(1, 3))]
        out.add("/" + "/".join(segments))
    return sorted(out)
