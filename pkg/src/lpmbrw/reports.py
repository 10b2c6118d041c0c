"""Result records shared by the inference and experiment layers."""

import json
import math
from dataclasses import dataclass, field


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class TestReport:
    """Outcome of one statistical check.

    For KS-type checks ``passed`` is ``p_value >= alpha``. Tolerance checks
    carry ``p_value=None`` and record the tolerance in ``params``.
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    p_value: float | None
    sizes: tuple = ()
    params: dict = field(default_factory=dict)
    alpha: float = 0.001
    passed: bool = False
    gating: bool = True
    notes: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "name": self.name,
            "statistic": _clean(float(self.statistic)),
            "p_value": None if self.p_value is None else _clean(float(self.p_value)),
            "params": {k: _clean(float(v)) if isinstance(v, (int, float)) else v
                       for k, v in self.params.items()},
            "alpha": self.alpha,
            "pass": bool(self.passed),
            "sizes": list(self.sizes),
            "gating": self.gating,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(name=d["name"], statistic=d["statistic"], p_value=d["p_value"],
                   sizes=tuple(d.get("sizes", ())), params=d.get("params", {}),
                   alpha=d["alpha"], passed=d["pass"], gating=d.get("gating", True))

    def line(self):
        """One-line human summary."""
        verdict = "PASS" if self.passed else "FAIL"
        p = "" if self.p_value is None else f" p={self.p_value:.4g}"
        return f"[{verdict}] {self.name}: stat={self.statistic:.6g}{p}"


def tolerance_report(name, value, target, tol, relative=False, gating=True, **params):
    """Pass iff ``|value - target| <= tol`` (times ``|target|`` when relative)."""
    dev = abs(value - target)
    bound = tol * abs(target) if relative else tol
    return TestReport(
        name=name, statistic=dev, p_value=None,
        params={"value": value, "target": target, "tolerance": bound, **params},
        alpha=0.0, passed=bool(dev <= bound), gating=gating,
    )


def dump_reports(reports, path):
    with open(path, "w") as fh:
        json.dump([r.to_json_dict() for r in reports], fh, indent=2, sort_keys=True)
        fh.write("\n")
