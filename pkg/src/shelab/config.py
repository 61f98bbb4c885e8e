"""Run configuration: flat key = value files, CLI overrides and a stable hash."""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

OUTPUT_ENV = "SHELAB_OUTPUT_ROOT"
CACHE_ENV = "SHELAB_CACHE_DIR"
DEFAULT_OUTPUT = "shelab-runs"

# fields that never change results
_UNHASHED = {"workers", "out", "block", "experiments"}


@dataclass
class RunConfig:
    """Every field mirrors a config-file key of the same name."""

    case: str = "flat"
    t_end: float = 0.5
    r_ladder: tuple = (4, 8, 16, 32)
    dx: float = 0.1
    h_f: float = 0.2
    preset: str = "two-plus-sine"
    replicas: int = 1000
    seed: int = 20240101
    workers: int = 1
    out: str = ""
    block: int = 250
    normalizer: str = "sample"
    tangents: bool = True
    second_order: bool = True
    spline_knots: tuple = ()
    spline_values: tuple = ()
    experiments: tuple = ("simulate",)

    def validate(self):
        if self.case not in ("flat", "pam"):
            raise ValueError(f"case must be flat or pam, got {self.case!r}")
        if self.normalizer not in ("sample", "quadrature"):
            raise ValueError(f"normalizer must be sample or quadrature, got {self.normalizer!r}")
        if self.normalizer == "quadrature" and not (self.case == "flat" and self.preset == "constant-1"):
            raise ValueError("quadrature normalizer exists only for the constant-1 flat case")
        if self.replicas < 2 or self.block < 1 or self.workers < 1:
            raise ValueError("replicas >= 2, block >= 1 and workers >= 1 required")
        if self.preset == "custom" and (len(self.spline_knots) < 3
                                        or len(self.spline_knots) != len(self.spline_values)):
            raise ValueError("custom preset needs matching spline_knots and spline_values (>= 3)")
        if len(self.r_ladder) < 1 or min(self.r_ladder) <= 0 or self.t_end <= 0:
            raise ValueError("R ladder and t_end must be positive")
        return self

    def hashed_fields(self):
        d = dataclasses.asdict(self)
        for k in _UNHASHED:
            d.pop(k)
        if self.preset != "custom" or self.case == "pam":
            d.pop("spline_knots")
            d.pop("spline_values")
        if self.case == "pam":
            d.pop("dx")
            d.pop("preset")
        else:
            d.pop("h_f")
        d["r_ladder"] = [float(r) for r in self.r_ladder]
        return d

    def config_hash(self):
        blob = json.dumps(self.hashed_fields(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def coefficient(self):
        from .coefficients import get_preset, spline_coefficient
        if self.preset == "custom":
            return spline_coefficient(self.spline_knots, self.spline_values)
        return get_preset(self.preset)

    def output_root(self):
        return self.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT

    def run_dir(self):
        return os.path.join(self.output_root(), self.config_hash())


PROFILES = {
    "flat-gaussian": dict(case="flat", preset="constant-1", normalizer="quadrature",
                          replicas=10_000, tangents=False),
    "flat-rate": dict(case="flat", preset="two-plus-sine", dx=0.2, replicas=1_000_000,
                      tangents=False),
    "flat-identity": dict(case="flat", preset="identity", replicas=4000, tangents=False),
    "pam-rate": dict(case="pam", r_ladder=(8, 16, 32, 64), replicas=20_000, tangents=False),
}


def _parse_value(name, raw, kind):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: not a boolean: {raw!r}")
    if kind is tuple:
        items = [s for s in raw.replace(",", " ").split() if s]
        if name == "r_ladder":
            return tuple(int(v) if float(v).is_integer() else float(v) for v in map(float, items))
        if name.startswith("spline_"):
            return tuple(float(v) for v in items)
        return tuple(items)
    return kind(raw)


_KINDS = {f.name: (type(f.default) if not isinstance(f.default, dataclasses._MISSING_TYPE) else str)
          for f in dataclasses.fields(RunConfig)}


def parse_config_text(text):
    """key = value lines; '#' starts a comment. Unknown keys are an error."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KINDS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw, _KINDS[key])
    return values


def load_config(path=None, profile=None, overrides=None):
    """Defaults < named profile < file < explicit overrides (None values ignored)."""
    values = {}
    if profile:
        if profile not in PROFILES:
            raise ValueError(f"unknown run profile {profile!r}; known: {sorted(PROFILES)}")
        values.update(PROFILES[profile])
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    if "r_ladder" in values:
        values["r_ladder"] = tuple(values["r_ladder"])
    return RunConfig(**values).validate()


def dump_config(cfg):
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
