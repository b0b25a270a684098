"""Shared fixtures: a disk cache for full-size sweeps and the acceptance summary."""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from tdtransport import experiments as ex

CACHE_DIR = Path(os.environ.get("TDTRANSPORT_CACHE", Path(__file__).parent / ".sweep_cache"))
# modules whose numerics determine a sweep record
_SOURCES = ("chain.py", "rates.py", "liouvillian.py", "integrate.py", "evolution.py",
            "metrics.py", "experiments.py")


def _source_hash() -> str:
    h = hashlib.sha256()
    pkg = resources.files("tdtransport")
    for name in _SOURCES:
        h.update(pkg.joinpath(name).read_bytes())
    return h.hexdigest()[:12]


def _record_to_json(r: ex.SweepRecord) -> dict:
    d = asdict(r)
    d["populations"] = [float(p) for p in r.populations]
    return d


def _record_from_json(d: dict) -> ex.SweepRecord:
    d = dict(d)
    d["populations"] = np.array(d["populations"], dtype=float)
    return ex.SweepRecord(**d)


class SweepStore:
    """Runs bundled figure experiments once per source revision."""

    def __init__(self, root: Path):
        self.root = root
        self.src = _source_hash()
        self._mem: dict[str, list[ex.SweepRecord]] = {}
        self._exps = {}
        for n in ex.FIGURES:
            for e in ex.parse_document(ex.figure_document(n)):
                if e.kind == "sweep":
                    self._exps.setdefault(e.name, e)

    def experiment(self, name: str) -> ex.ExperimentConfig:
        return self._exps[name]

    def _path(self, exp: ex.ExperimentConfig) -> Path:
        key = hashlib.sha256(json.dumps(exp.to_dict(), sort_keys=True).encode()).hexdigest()
        return self.root / f"{exp.name}-{key[:12]}-{self.src}.json"

    def records(self, name: str) -> list[ex.SweepRecord]:
        if name in self._mem:
            return self._mem[name]
        exp = self._exps[name]
        path = self._path(exp)
        if path.exists():
            recs = [_record_from_json(d) for d in json.loads(path.read_text())]
        else:
            threads = int(os.environ.get("TDTRANSPORT_THREADS", "1"))
            recs = ex.run_sweep(exp, threads=threads)
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps([_record_to_json(r) for r in recs]))
            tmp.replace(path)
        self._mem[name] = recs
        return recs


@pytest.fixture(scope="session")
def sweeps() -> SweepStore:
    return SweepStore(CACHE_DIR)


# acceptance criterion -> (passed, detail); filled from test reports
_CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    n = props["criterion"]
    ok = report.passed
    detail = props.get("detail", "")
    if not ok and report.longrepr is not None:
        crash = getattr(report.longrepr, "reprcrash", None)
        msg = crash.message.splitlines()[0] if crash is not None else ""
        detail = f"{detail}; {msg}" if detail else msg
    prev = _CRITERIA.get(n)
    _CRITERIA[n] = ((prev[0] if prev else True) and ok,
                    "; ".join(x for x in ((prev[1] if prev else ""), detail) if x))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def finite(x) -> bool:
    return x is not None and math.isfinite(x)
