"""Plain-text instance files.

One record per line, ``#`` starts a comment, tokens are whitespace separated::

    horizon 12
    agent n1
    task k1 penalty 1 downtime 2
    window n1 k1 0 5
    completion n1 k1 geometric 0.75
    completion n1 k2 epanechnikov 9 3
    completion n2 k1 table 0 0.5 0.9 1
    downtime n1 k1 3

Ids made only of digits are read back as ints. ``downtime`` lines override the
task downtime for one agent-task pair.
"""

from __future__ import annotations

from pathlib import Path
from typing import TextIO, Union

from scoba.completion import model_from_spec
from scoba.core import InputError, ProblemInstance, TaskSpec, TimeWindow, id_key


def _parse_id(tok: str):
    return int(tok) if tok.isdigit() else tok


def loads(text: str) -> ProblemInstance:
    horizon = None
    agents, tasks = [], []
    windows, completion, downtimes = {}, {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head, args = tok[0], tok[1:]
        try:
            if head == "horizon":
                horizon = int(args[0])
            elif head == "agent":
                agents.append(_parse_id(args[0]))
            elif head == "task":
                opts = dict(zip(args[1::2], args[2::2]))
                tasks.append(
                    TaskSpec(
                        _parse_id(args[0]),
                        penalty=float(opts.get("penalty", 1.0)),
                        downtime=int(opts.get("downtime", 0)),
                    )
                )
            elif head == "window":
                a, k = _parse_id(args[0]), _parse_id(args[1])
                windows[(a, k)] = TimeWindow(int(args[2]), int(args[3]))
            elif head == "completion":
                a, k = _parse_id(args[0]), _parse_id(args[1])
                completion[(a, k)] = model_from_spec(args[2], args[3:])
            elif head == "downtime":
                downtimes[(_parse_id(args[0]), _parse_id(args[1]))] = int(args[2])
            else:
                raise InputError(f"unknown record {head!r}")
        except (IndexError, ValueError) as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
    if horizon is None:
        raise InputError("missing horizon record")
    return ProblemInstance(tuple(agents), tuple(tasks), horizon, windows, completion, downtimes)


def dumps(instance: ProblemInstance) -> str:
    lines = [f"horizon {instance.horizon}"]
    lines += [f"agent {a}" for a in instance.agents]
    for t in instance.tasks:
        lines.append(f"task {t.id} penalty {t.penalty!r} downtime {t.downtime}")
    keys = sorted(instance.windows, key=lambda p: (id_key(p[0]), id_key(p[1])))
    for a, k in keys:
        w = instance.windows[(a, k)]
        lines.append(f"window {a} {k} {w.lower} {w.upper}")
    for a, k in keys:
        m = instance.completion[(a, k)]
        params = " ".join(repr(float(p)) for p in m.params())
        lines.append(f"completion {a} {k} {m.name} {params}")
    for (a, k), d in sorted(instance.downtimes.items(), key=lambda kv: (id_key(kv[0][0]), id_key(kv[0][1]))):
        lines.append(f"downtime {a} {k} {d}")
    return "\n".join(lines) + "\n"


def load(src: Union[str, Path, TextIO]) -> ProblemInstance:
    if hasattr(src, "read"):
        return loads(src.read())
    return loads(Path(src).read_text())


def dump(instance: ProblemInstance, dst: Union[str, Path]) -> None:
    Path(dst).write_text(dumps(instance))
