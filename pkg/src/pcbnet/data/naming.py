"""Dataset names such as ``SBT_unbalanced_60s120n_30t_30f_40x30_flip``.

Grammar (tokens joined by ``_``, optional parts in brackets)::

    [SBT] balance size [<test>t] [<depth>f] [<W>x<H>] [flip]

    balance : balanced | unbalanced   (aliases bal, unb, unabalanced)
    size    : <total>                  for balanced sets, split evenly
              <s>s<n>n                 for unbalanced sets
              <s><n>                   also accepted when n = 2s, e.g. 60120

Parsing is lenient about the prefix and the balance aliases; formatting
always emits the canonical long form, so ``parse(format(spec)) == spec``.
"""

import re
from dataclasses import dataclass
from typing import Optional, Tuple

from ..errors import ParseError, ValidationError

GRID_RESOLUTIONS = ((160, 120), (80, 60), (40, 30), (32, 24))
GRID_DEPTHS = (10, 30, 90)
GRID_TEST_PERCENTS = (20, 30, 40)

_BALANCE = {
    "balanced": "balanced",
    "bal": "balanced",
    "unbalanced": "unbalanced",
    "unb": "unbalanced",
    "unabalanced": "unbalanced",  # spelling used in one published table
}


@dataclass(frozen=True)
class DatasetSpec:
    balance: str
    suspicious_count: int
    normal_count: int
    test_percent: Optional[int] = None
    depth: Optional[int] = None
    resolution: Optional[Tuple[int, int]] = None  # (width, height)
    flip: bool = False

    @property
    def total(self):
        return self.suspicious_count + self.normal_count

    @property
    def test_fraction(self):
        return None if self.test_percent is None else self.test_percent / 100

    @property
    def width(self):
        return self.resolution[0] if self.resolution else None

    @property
    def height(self):
        return self.resolution[1] if self.resolution else None

    @property
    def name(self):
        return format_dataset_name(self)

    def validate(self, custom=False):
        problems = []
        if self.balance not in ("balanced", "unbalanced"):
            problems.append(f"balance {self.balance!r}")
        if self.suspicious_count < 1 or self.normal_count < 1:
            problems.append("class counts must be positive")
        if self.balance == "balanced" and self.suspicious_count != self.normal_count:
            problems.append("balanced sets need equal class counts")
        if self.balance == "unbalanced" and self.suspicious_count == self.normal_count:
            problems.append("unbalanced sets need unequal class counts")
        if not custom:
            if self.balance == "unbalanced" and self.normal_count != 2 * self.suspicious_count:
                problems.append("unbalanced sets use one suspicious sample per two normal ones")
            if self.resolution is not None and tuple(self.resolution) not in GRID_RESOLUTIONS:
                problems.append(f"resolution {self.resolution[0]}x{self.resolution[1]} not in the grid")
            if self.depth is not None and self.depth not in GRID_DEPTHS:
                problems.append(f"depth {self.depth} not in {GRID_DEPTHS}")
            if self.test_percent is not None and self.test_percent not in GRID_TEST_PERCENTS:
                problems.append(f"test size {self.test_percent}% not in {GRID_TEST_PERCENTS}")
        else:
            if self.depth is not None and self.depth < 1:
                problems.append("depth must be positive")
            if self.test_percent is not None and not 0 < self.test_percent < 100:
                problems.append("test size must be between 0 and 100 percent")
            if self.resolution is not None and min(self.resolution) < 1:
                problems.append("resolution must be positive")
        if problems:
            raise ValidationError(f"invalid dataset spec: {'; '.join(problems)}", problems)
        return self


_SIZE_UNB = re.compile(r"(\d+)s(\d+)n")
_TEST = re.compile(r"(\d+)t")
_DEPTH = re.compile(r"(\d+)f")
_RES = re.compile(r"(\d+)x(\d+)")


def parse_dataset_name(name: str, custom=False) -> DatasetSpec:
    tokens = "".join(name.split()).split("_")  # tolerate stray spaces from typeset names
    if tokens and tokens[0] == "SBT":
        tokens = tokens[1:]
    if not tokens or tokens[0] not in _BALANCE:
        raise ParseError(f"{name!r}: expected a balance token, got {tokens[0] if tokens else ''!r}",
                         tokens[0] if tokens else "")
    balance = _BALANCE[tokens[0]]
    if len(tokens) < 2:
        raise ParseError(f"{name!r}: missing sample count after {tokens[0]!r}", tokens[0])
    size = tokens[1]
    if balance == "balanced":
        if not size.isdigit():
            raise ParseError(f"{name!r}: balanced size must be a number, got {size!r}", size)
        total = int(size)
        if total % 2:
            raise ParseError(f"{name!r}: balanced total {total} is odd", size)
        s = n = total // 2
    else:
        m = _SIZE_UNB.fullmatch(size)
        if m:
            s, n = int(m.group(1)), int(m.group(2))
        else:
            # bare digits such as "60120": the split point where normal = 2 x suspicious
            splits = [(int(size[:i]), int(size[i:])) for i in range(1, len(size))
                      if size.isdigit() and size[i] != "0" and int(size[i:]) == 2 * int(size[:i])]
            if len(splits) != 1:
                raise ParseError(f"{name!r}: unbalanced size must look like 60s120n, got {size!r}", size)
            s, n = splits[0]

    fields = {"test_percent": None, "depth": None, "resolution": None, "flip": False}
    order = [
        ("test_percent", _TEST, lambda m: int(m.group(1))),
        ("depth", _DEPTH, lambda m: int(m.group(1))),
        ("resolution", _RES, lambda m: (int(m.group(1)), int(m.group(2)))),
        ("flip", re.compile("flip"), lambda m: True),
    ]
    pos = 0
    for tok in tokens[2:]:
        for i in range(pos, len(order)):
            key, pattern, conv = order[i]
            m = pattern.fullmatch(tok)
            if m:
                fields[key] = conv(m)
                pos = i + 1
                break
        else:
            raise ParseError(f"{name!r}: unexpected token {tok!r}", tok)
    spec = DatasetSpec(balance, s, n, **fields)
    try:
        return spec.validate(custom=custom)
    except ValidationError as exc:
        raise ParseError(f"{name!r}: {exc}", name) from None


def format_dataset_name(spec: DatasetSpec) -> str:
    if spec.balance == "balanced":
        parts = ["SBT", "balanced", str(spec.total)]
    else:
        parts = ["SBT", "unbalanced", f"{spec.suspicious_count}s{spec.normal_count}n"]
    if spec.test_percent is not None:
        parts.append(f"{spec.test_percent}t")
    if spec.depth is not None:
        parts.append(f"{spec.depth}f")
    if spec.resolution is not None:
        parts.append(f"{spec.resolution[0]}x{spec.resolution[1]}")
    if spec.flip:
        parts.append("flip")
    return "_".join(parts)
