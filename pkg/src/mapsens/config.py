"""Run configuration: TOML loading, validation and object construction."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError, ParameterError
from .hsic import KERNELS
from .model import DomainGrid, FrozenModel, LevelGrid, MapModel, auto_levels, make_synthetic, read_table
from .sampling import DistributionSpec, InputSpace, distribution_problems
from .universal import FAMILIES

METHODS = ("sobol-maps", "generalized-sobol", "vorobev", "universal", "hsic")
MODEL_KINDS = ("synthetic-separable", "synthetic-plume", "external-table")
DIST_PARAMS = {
    "uniform": (),
    "truncated-normal": ("mu", "sigma"),
    "truncated-skew-normal": ("xi", "omega", "alpha"),
}

# defaults mirror the comparison budgets of about 1000 evaluations per method
ANALYSIS_DEFAULTS = {
    "sobol-maps": {"n": 1000, "generator": "halton"},
    "generalized-sobol": {"n": 1000, "generator": "halton"},
    "vorobev": {"n_outer": 32, "n_inner": 32},
    "universal": {"n": 1000, "n_a": 100, "family": "vorobev-quantiles", "axis": 3},
    "hsic": {"n": 1000, "kernel": "sobolev1", "bandwidth": 0.2, "pvalue": "gamma", "B_perm": 200,
             "rescale": "affine"},
}
GRID_DEFAULTS = {"n1": 64, "n2": 64, "nc": 32, "x1": [0.0, 1.0], "x2": [0.0, 1.0],
                 "c_bounds": "auto", "pilot": 64}
BOOTSTRAP_DEFAULTS = {"B": 100, "level": 0.95, "fraction": 0.8}
MEMORY_LIMIT = 8 * 2 ** 30


@dataclass
class RunConfig:
    inputs: list
    model: dict
    grid: dict
    analyses: list
    bootstrap: dict
    seed: int = 0
    output: str = "results"
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "RunConfig":
        problems = validate(raw, base_dir)
        if problems:
            key, msg = problems[0]
            raise ConfigError(msg, key=key)
        grid = {**GRID_DEFAULTS, **raw.get("grid", {})}
        analyses = [{**ANALYSIS_DEFAULTS[a["method"]], **a} for a in raw["analyses"]]
        return cls(
            inputs=list(raw["inputs"]),
            model=dict(raw["model"]),
            grid=grid,
            analyses=analyses,
            bootstrap={**BOOTSTRAP_DEFAULTS, **raw.get("bootstrap", {})},
            seed=int(raw.get("seed", 0)),
            output=str(raw.get("output", "results")),
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
        )

    def full_space(self) -> InputSpace:
        return InputSpace(tuple((d["name"], make_distribution(d)) for d in self.inputs))

    def fixed_inputs(self) -> dict:
        return {d["name"]: float(d["fixed"]) for d in self.inputs if "fixed" in d}

    def domain_grid(self) -> DomainGrid:
        g = self.grid
        return DomainGrid(tuple(g["x1"]), tuple(g["x2"]), int(g["n1"]), int(g["n2"]))

    def build_model(self) -> MapModel:
        space = self.full_space()
        params = {k: v for k, v in self.model.items() if k != "kind"}
        if self.model["kind"] == "external-table":
            path = Path(params["path"])
            if not path.is_absolute():
                path = self.base_dir / path
            model = read_table(path, space, (self.grid["x1"], self.grid["x2"]),
                               strict=bool(params.get("strict", False)))
            if model.grid.shape != (int(self.grid["n1"]), int(self.grid["n2"])):
                raise ConfigError(f"table grid {model.grid.shape} does not match grid.n1/n2", key="grid")
        else:
            model = make_synthetic(self.model["kind"], space, self.domain_grid(), params)
        fixed = self.fixed_inputs()
        return FrozenModel(model, fixed) if fixed else model

    def level_grid(self, model: MapModel) -> LevelGrid:
        g = self.grid
        if g["c_bounds"] == "auto":
            return auto_levels(model, int(g["nc"]), int(g["pilot"]), seed=self.seed)
        lo, hi = g["c_bounds"]
        return LevelGrid(float(lo), float(hi), int(g["nc"]))


def make_distribution(entry: dict) -> DistributionSpec:
    kind = entry["dist"]
    lo, hi = entry["bounds"]
    params = {k: float(entry[k]) for k in DIST_PARAMS.get(kind, ()) if k in entry}
    return DistributionSpec(kind, float(lo), float(hi), **params)


def read_config_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    text = read_config_text(path)
    try:
        return RunConfig.from_dict(parse_toml(text), base_dir=path.parent)
    except ConfigError as exc:
        if exc.line is None and exc.key is not None:
            raise ConfigError(exc.args[0].split("] ", 1)[-1], key=exc.key,
                              line=locate_key(text, exc.key)) from None
        raise


def locate_key(text: str, key: str) -> int | None:
    """Best-effort 1-based line of a dotted key such as ``inputs[2].sigma``."""
    lines = text.splitlines()
    pos = 0
    parts = key.split(".")
    for depth, part in enumerate(parts):
        m = re.fullmatch(r"(\w+)(?:\[(\d+)\])?", part)
        if m is None:
            return None
        name, index = m.group(1), m.group(2)
        if index is not None:
            header = re.compile(rf"^\s*\[\[\s*{re.escape(name)}\s*\]\]")
            hits = [k for k, line in enumerate(lines) if header.match(line)]
            if int(index) >= len(hits):
                return None
            pos = hits[int(index)]
            continue
        table = re.compile(rf"^\s*\[\s*{re.escape(name)}\s*\]")
        assign = re.compile(rf"^\s*{re.escape(name)}\s*=")
        found = None
        for k in range(pos, len(lines)):
            if table.match(lines[k]) or assign.match(lines[k]):
                found = k
                break
        if found is None:
            return pos + 1 if depth else None
        pos = found
    return pos + 1


def parse_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", line=int(m.group(1)) if m else None) from exc


def _positive_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


def validate(raw: dict, base_dir=None) -> list[tuple[str, str]]:
    """Dry-run checks; returns ``(key, message)`` pairs and never evaluates the model."""
    out: list[tuple[str, str]] = []
    inputs = raw.get("inputs")
    names: list[str] = []
    if not isinstance(inputs, list) or not inputs:
        out.append(("inputs", "at least one [[inputs]] table is required"))
        inputs = []
    for k, entry in enumerate(inputs):
        key = f"inputs[{k}]"
        if not isinstance(entry, dict):
            out.append((key, "input entries must be tables"))
            continue
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            out.append((f"{key}.name", "input name is required"))
        elif name in names:
            out.append((f"{key}.name", f"duplicate input name {name!r}"))
        else:
            names.append(name)
        bounds = entry.get("bounds")
        if not (isinstance(bounds, list) and len(bounds) == 2):
            out.append((f"{key}.bounds", "bounds must be a two-element list"))
            continue
        params = {p: entry.get(p) for p in ("mu", "sigma", "xi", "omega", "alpha")}
        for msg in distribution_problems(entry.get("dist"), bounds[0], bounds[1], **params):
            out.append((_dist_key(key, entry, msg), msg))
        if "fixed" in entry:
            try:
                ok = float(bounds[0]) <= float(entry["fixed"]) <= float(bounds[1])
            except (TypeError, ValueError):
                ok = False
            if not ok:
                out.append((f"{key}.fixed", "fixed value must be a number within the bounds"))
    free = [d.get("name") for d in inputs if isinstance(d, dict) and "fixed" not in d]
    if inputs and not free:
        out.append(("inputs", "every input is fixed; nothing to analyse"))

    grid = {**GRID_DEFAULTS, **raw.get("grid", {})}
    for key in ("n1", "n2", "nc", "pilot"):
        if not _positive_int(grid.get(key)):
            out.append((f"grid.{key}", f"grid.{key} must be a positive integer, got {grid.get(key)!r}"))
    for key in ("x1", "x2"):
        b = grid.get(key)
        if not (isinstance(b, list) and len(b) == 2 and all(isinstance(v, (int, float)) for v in b) and b[0] < b[1]):
            out.append((f"grid.{key}", "domain bounds must be an ordered two-element list"))
    cb = grid.get("c_bounds")
    if cb != "auto" and not (isinstance(cb, list) and len(cb) == 2
                             and all(isinstance(v, (int, float)) for v in cb) and cb[0] < cb[1]):
        out.append(("grid.c_bounds", "c_bounds must be 'auto' or an ordered [c_min, c_max] list"))

    model = raw.get("model")
    if not isinstance(model, dict) or model.get("kind") not in MODEL_KINDS:
        out.append(("model.kind", f"model.kind must be one of {', '.join(MODEL_KINDS)}"))
    else:
        out.extend(_model_problems(model, names, base_dir))

    boot = {**BOOTSTRAP_DEFAULTS, **raw.get("bootstrap", {})}
    if not (_positive_int(boot.get("B")) and boot["B"] >= 2):
        out.append(("bootstrap.B", "bootstrap.B must be an integer >= 2"))
    if not (isinstance(boot.get("level"), float) and 0 < boot["level"] < 1):
        out.append(("bootstrap.level", "bootstrap.level must lie in (0, 1)"))
    if boot.get("mode", "with-replacement") not in ("with-replacement", "subsample"):
        out.append(("bootstrap.mode", "bootstrap.mode must be 'with-replacement' or 'subsample'"))
    if not (isinstance(boot.get("fraction"), (int, float)) and 0 < boot["fraction"] <= 1):
        out.append(("bootstrap.fraction", "bootstrap.fraction must lie in (0, 1]"))

    analyses = raw.get("analyses")
    if not isinstance(analyses, list) or not analyses:
        out.append(("analyses", "at least one [[analyses]] table is required"))
        analyses = []
    for k, a in enumerate(analyses):
        out.extend(_analysis_problems(f"analyses[{k}]", a, grid, len(free)))
    return out


def _model_problems(model, names, base_dir):
    out = []
    kind = model["kind"]
    if kind == "external-table":
        path = model.get("path")
        if not isinstance(path, str):
            out.append(("model.path", "external-table models need a 'path'"))
        else:
            full = Path(path) if Path(path).is_absolute() else Path(base_dir or ".") / path
            if not full.exists():
                out.append(("model.path", f"table file not found: {full}"))
    elif kind == "synthetic-plume":
        for role in ("angle", "spread"):
            spec = model.get(role)
            if isinstance(spec, dict) and spec.get("input") not in names:
                out.append((f"model.{role}.input", f"unknown input {spec.get('input')!r}"))
        for k, item in enumerate(model.get("amplitude", [])):
            if item.get("input") not in names:
                out.append((f"model.amplitude[{k}].input", f"unknown input {item.get('input')!r}"))
    else:
        terms = model.get("terms", [])
        if not terms:
            out.append(("model.terms", "separable models need at least one term"))
        for k, t in enumerate(terms):
            if t.get("input") not in names:
                out.append((f"model.terms[{k}].input", f"unknown input {t.get('input')!r}"))
    return out


def _analysis_problems(key, a, grid, p):
    out = []
    if not isinstance(a, dict) or a.get("method") not in METHODS:
        return [(f"{key}.method", f"method must be one of {', '.join(METHODS)}")]
    a = {**ANALYSIS_DEFAULTS[a["method"]], **a}
    method = a["method"]
    budget_keys = ("n_outer", "n_inner") if method == "vorobev" else ("n",)
    for b in budget_keys:
        if not _positive_int(a.get(b)):
            out.append((f"{key}.{b}", f"{b} must be a positive integer"))
    if out:
        return out
    if method == "vorobev" and min(a["n_outer"], a["n_inner"]) < 2:
        out.append((key, "vorobev loops need n_outer, n_inner >= 2"))
    if method in ("universal", "hsic") and a["n"] < 10:
        out.append((f"{key}.n", f"{method} needs n >= 10"))
    if method in ("sobol-maps", "generalized-sobol"):
        if a["n"] < 2:
            out.append((f"{key}.n", "pick-and-freeze needs n >= 2"))
        if a.get("generator") not in ("mc", "halton"):
            out.append((f"{key}.generator", "generator must be 'mc' or 'halton'"))
    if method == "universal":
        fams = a["family"] if isinstance(a["family"], list) else [a["family"]]
        for fam in fams:
            if fam not in FAMILIES:
                out.append((f"{key}.family", f"unknown family {fam!r}"))
        if not _positive_int(a.get("n_a")):
            out.append((f"{key}.n_a", "n_a must be a positive integer"))
        if a.get("axis") not in (1, 2, 3):
            out.append((f"{key}.axis", "axis must be 1, 2 or 3"))
        law = a.get("law")
        if law is not None:
            params = law.get("params") if isinstance(law, dict) else None
            ok = (isinstance(law, dict) and law.get("kind") in ("uniform", "normal")
                  and isinstance(params, list) and len(params) == 2
                  and all(isinstance(v, (int, float)) for v in params)
                  and (params[0] < params[1] if law["kind"] == "uniform" else params[1] > 0))
            if not ok:
                out.append((f"{key}.law", "law must be {kind = 'uniform', params = [lo, hi]} with lo < hi "
                                          "or {kind = 'normal', params = [mean, sd]} with sd > 0"))
    if method == "hsic":
        kernels = a["kernel"] if isinstance(a["kernel"], list) else [a["kernel"]]
        for kern in kernels:
            if kern not in KERNELS:
                out.append((f"{key}.kernel", f"unknown kernel {kern!r}"))
        if a.get("rescale") not in ("affine", "cdf"):
            out.append((f"{key}.rescale", "rescale must be 'affine' or 'cdf'"))
        if not (isinstance(a.get("bandwidth"), (int, float)) and a["bandwidth"] > 0):
            out.append((f"{key}.bandwidth", "bandwidth must be > 0"))
        if a.get("pvalue") not in ("gamma", "permutation", "both", "none"):
            out.append((f"{key}.pvalue", "pvalue must be gamma, permutation, both or none"))
        if not _positive_int(a.get("B_perm")) or (a.get("pvalue") in ("gamma", "both") and a["B_perm"] < 20):
            out.append((f"{key}.B_perm", "B_perm must be an integer (>= 20 for the gamma fit)"))
    if a.get("bootstrap_mode", "subsample") not in ("with-replacement", "subsample"):
        out.append((f"{key}.bootstrap_mode", "bootstrap_mode must be 'with-replacement' or 'subsample'"))
    if "seed" in a and not isinstance(a["seed"], int):
        out.append((f"{key}.seed", "seed must be an integer"))
    out.extend(_memory_problems(key, a, grid, p))
    return out


def _memory_problems(key, a, grid, p):
    try:
        cells = int(grid["n1"]) * int(grid["n2"])
    except (TypeError, ValueError):
        return []
    method = a["method"]
    if method == "vorobev":
        need = a["n_inner"] * cells * 8 * 2
    elif method in ("sobol-maps", "generalized-sobol"):
        need = min(a["n"], 256) * cells * 8 * (p + 3) + cells * 8 * (p + 3) * 100
    else:
        need = a["n"] * cells * 8 + a["n"] ** 2 * 8 * (p + 3)
    if need > MEMORY_LIMIT:
        return [(key, f"estimated memory {need / 2 ** 30:.1f} GiB exceeds {MEMORY_LIMIT / 2 ** 30:.0f} GiB")]
    return []


def _dist_key(key: str, entry: dict, msg: str) -> str:
    """Point a distribution problem at the parameter or bounds it names."""
    m = re.search(r"parameter '(\w+)'", msg)
    if m and m.group(1) in entry:
        return f"{key}.{m.group(1)}"
    if "bound" in msg:
        return f"{key}.bounds"
    return f"{key}.dist"


def check_dist(entry: dict) -> DistributionSpec:
    try:
        return make_distribution(entry)
    except ParameterError as exc:
        raise ConfigError(str(exc), key=f"inputs.{entry.get('name')}") from exc
