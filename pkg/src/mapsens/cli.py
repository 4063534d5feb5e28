"""Command-line experiment runner: ``mapsens run|validate config.toml``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (RunConfig, load_config, locate_key, parse_toml, read_config_text, validate)
from .errors import ConfigError, DegenerateModelError, MapSensError, ParameterError
from .hsic import HsicAnalysis, InputKernelSpec
from .model import CountingModel, LevelGrid, MapModel
from .resample import BootstrapSpec
from .sampling import pick_freeze
from .setgrid import coverage_from_levels
from .sobol_map import SobolMapResult, sobol_maps
from .universal import TestSetLaw, make_family, test_set_distances, universal_index
from .vorobev import vorobev_index

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE = 0, 2, 3
INDEX_COLUMNS = ("input", "method", "estimate", "ci_lo", "ci_hi", "n", "B", "seed", "extra")
PVALUE_COLUMNS = ("input", "kernel", "method", "pvalue", "pvalue_sd", "statistic", "n", "B_perm", "seed")


def _fmt(x) -> str:
    """Shortest round-trip text for floats; plain text otherwise."""
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _extra(**kw) -> str:
    return ";".join(f"{k}={_fmt(v)}" for k, v in kw.items())


def _child_seed(seed: int, *path: int) -> int:
    """Integer seed derived from ``seed`` and a path, stable across runs."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


class Runner:
    """Executes the analyses of a :class:`RunConfig` and collects rows for the output files."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.index_rows: list[dict] = []
        self.pvalue_rows: list[dict] = []
        self.maps: dict[str, np.ndarray] = {}
        self.map_headers: dict[str, str] = {}
        self.records: list[dict] = []
        self.model: MapModel | None = None
        self.levels: LevelGrid | None = None

    def bootstrap(self, seed: int, analysis: dict | None = None) -> BootstrapSpec:
        """Resampling plan; universal indices default to the 0.8n subsample scheme."""
        b = self.config.bootstrap
        mode = b.get("mode", "with-replacement")
        if analysis is not None:
            default = "subsample" if analysis["method"] == "universal" else mode
            mode = analysis.get("bootstrap_mode", default)
        return BootstrapSpec(
            B=int(b["B"]),
            mode=mode,
            fraction=float(b["fraction"]),
            correction=bool(b.get("correction", True)),
            level=float(b["level"]),
            seed=int(b.get("seed", _child_seed(seed, 99))),
        )

    def prepare(self):
        try:
            model = self.config.build_model()
            self.levels = self.config.level_grid(model)
        except ParameterError as exc:
            raise ConfigError(str(exc), key="model") from exc
        # counting starts after the level pilot so budgets reflect the analyses only
        self.model = CountingModel(model)

    def run(self) -> int:
        self.prepare()
        status = EXIT_OK
        for k, analysis in enumerate(self.config.analyses):
            seed = int(analysis.get("seed", self.config.seed))
            record = {"index": k, "method": analysis["method"], "seed": seed, "status": "ok"}
            before = self.model_count()
            try:
                degenerate = getattr(self, "_" + analysis["method"].replace("-", "_"))(analysis, seed, record)
            except DegenerateModelError as exc:
                record["status"] = "degenerate"
                record["message"] = str(exc)
                degenerate = True
            if degenerate:
                status = EXIT_DEGENERATE
                if record["status"] == "ok":
                    record["status"] = "partially-degenerate"
            record["evaluations"] = self.model_count() - before
            self.records.append(record)
        return status

    def model_count(self) -> int:
        return getattr(self.model, "count", 0)

    # analyses; each returns True when an estimator hit a degenerate case

    def _sobol(self, analysis, seed, record, with_rows):
        n = int(analysis["n"])
        design = pick_freeze(self.model.space, n, seed=seed, generator=analysis["generator"],
                             skip=int(analysis.get("skip", 0)))
        boot = self.bootstrap(seed) if with_rows else None
        result = sobol_maps(self.model, design, bootstrap=boot)
        record["n_evaluations"] = result.n_evaluations
        record["degenerate_cells"] = int(result.degenerate.sum())
        self._store_maps(result, analysis["method"])
        if with_rows:
            gen = result.generalized
            record["sum"] = float(gen.sum())
            for i, name in enumerate(result.names):
                lo, hi = result.ci[name]
                self._row(name, "generalized-sobol", gen[i], lo, hi, n, boot.B, seed,
                          _extra(evaluations=result.n_evaluations, generator=analysis["generator"]))
        return False

    def _sobol_maps(self, analysis, seed, record):
        return self._sobol(analysis, seed, record, with_rows=False)

    def _generalized_sobol(self, analysis, seed, record):
        return self._sobol(analysis, seed, record, with_rows=True)

    def _vorobev(self, analysis, seed, record):
        n_outer, n_inner = int(analysis["n_outer"]), int(analysis["n_inner"])
        boot = self.bootstrap(seed)
        degenerate = False
        record["n_evaluations"] = 0
        for i, name in enumerate(self.model.space.names):
            try:
                est = vorobev_index(self.model, self.levels, i, n_outer, n_inner, seed=seed, bootstrap=boot)
            except DegenerateModelError as exc:
                degenerate = True
                self._row(name, "vorobev", float("nan"), None, None, n_outer, boot.B, seed,
                          _extra(status="degenerate"))
                record.setdefault("messages", {})[name] = str(exc)
                record["n_evaluations"] += n_outer * n_inner
                continue
            record["n_evaluations"] += est.n_evaluations
            self._row(name, "vorobev", est.estimate, est.ci[0], est.ci[1], n_outer, boot.B, seed,
                      _extra(n_inner=n_inner, evaluations=est.n_evaluations, vmd=est.vmd))
        return degenerate

    def _sample_sets(self, analysis, seed):
        n = int(analysis["n"])
        U = self.model.space.sample(n, _child_seed(seed, 0))
        return U, self.model.evaluate_sets(U, self.levels)

    def _universal(self, analysis, seed, record):
        U, sets = self._sample_sets(analysis, seed)
        n, nc = U.shape[0], self.levels.nc
        boot = self.bootstrap(seed, analysis)
        families = analysis["family"] if isinstance(analysis["family"], list) else [analysis["family"]]
        law = analysis.get("law")
        law = TestSetLaw(law["kind"], *law.get("params", [])) if law else None
        shape = (*self.model.grid.shape, nc)
        cov = coverage_from_levels(sets, nc)
        n_a = int(analysis["n_a"])
        degenerate = False
        record["n_evaluations"] = n
        for f, kind in enumerate(families):
            family = make_family(kind, shape, law=law, coverage=cov if kind == "vorobev-quantiles" else None,
                                 axis=int(analysis["axis"]))
            params = family.law.sample(n_a, _child_seed(seed, 1, f))
            D = test_set_distances(sets, nc, family, params)
            for i, name in enumerate(self.model.space.names):
                try:
                    est = universal_index(i, U, sets, family, n_a, bootstrap=boot, name=name, distances=D)
                except DegenerateModelError as exc:
                    degenerate = True
                    self._row(name, "universal", float("nan"), None, None, n, boot.B, seed,
                              _extra(family=kind, status="degenerate"))
                    record.setdefault("messages", {})[f"{kind}:{name}"] = str(exc)
                    continue
                self._row(name, "universal", est.estimate, est.ci[0], est.ci[1], n, boot.B, seed,
                          _extra(family=kind, n_a=n_a))
        return degenerate

    def _hsic(self, analysis, seed, record):
        U, sets = self._sample_sets(analysis, seed)
        n, nc = U.shape[0], self.levels.nc
        boot = self.bootstrap(seed)
        kernels = analysis["kernel"] if isinstance(analysis["kernel"], list) else [analysis["kernel"]]
        methods = {"gamma": ["gamma"], "permutation": ["permutation"],
                   "both": ["gamma", "permutation"], "none": []}[analysis["pvalue"]]
        B_perm = int(analysis["B_perm"])
        names = self.model.space.names
        sigma2 = analysis.get("sigma2")
        degenerate = False
        record["n_evaluations"] = n
        if analysis["rescale"] == "cdf":
            X, bounds = self.model.space.probability_transform(U), None
        else:
            X, bounds = U, self.model.space.bounds
        record["rescale"] = analysis["rescale"]
        for kern in kernels:
            spec = InputKernelSpec(kern, float(analysis["bandwidth"]))
            hs = HsicAnalysis(X, sets, spec, sigma2=sigma2, bounds=bounds, nc=nc, names=names)
            sigma2 = hs.sigma2
            record["sigma2"] = sigma2
            for i, name in enumerate(names):
                try:
                    est = hs.estimate(i, bootstrap=boot)
                    self._row(name, "hsic", est.index, est.ci[0], est.ci[1], n, boot.B, seed,
                              _extra(kernel=kern, hsic=est.hsic, sigma2=sigma2))
                except DegenerateModelError as exc:
                    degenerate = True
                    self._row(name, "hsic", float("nan"), None, None, n, boot.B, seed,
                              _extra(kernel=kern, status="degenerate"))
                    record.setdefault("messages", {})[f"{kern}:{name}"] = str(exc)
                for method in methods:
                    p_seed = _child_seed(seed, 2, i)
                    try:
                        p = hs.pvalue(i, method, B_perm, p_seed)
                        sd = hs.pvalue_spread(i, boot, B_perm, p_seed) if method == "gamma" else None
                    except DegenerateModelError as exc:
                        degenerate = True
                        p, sd = float("nan"), None
                        record.setdefault("messages", {})[f"{kern}:{name}:{method}"] = str(exc)
                    self.pvalue_rows.append({
                        "input": name, "kernel": kern, "method": method, "pvalue": _fmt(p),
                        "pvalue_sd": _fmt(sd), "statistic": _fmt(hs.hsic(i)), "n": n,
                        "B_perm": B_perm, "seed": p_seed,
                    })
        return degenerate

    def _row(self, name, method, estimate, lo, hi, n, B, seed, extra):
        self.index_rows.append({
            "input": name, "method": method, "estimate": _fmt(float(estimate)),
            "ci_lo": _fmt(None if lo is None else float(lo)), "ci_hi": _fmt(None if hi is None else float(hi)),
            "n": n, "B": B, "seed": seed, "extra": extra,
        })

    def _store_maps(self, result: SobolMapResult, method: str):
        g = result.grid
        bounds = f"# grid x1=[{_fmt(float(g.x1_bounds[0]))},{_fmt(float(g.x1_bounds[1]))}] " \
                 f"x2=[{_fmt(float(g.x2_bounds[0]))},{_fmt(float(g.x2_bounds[1]))}] n1={g.n1} n2={g.n2}"
        for i, name in enumerate(result.names):
            self.maps[f"S_{name}"] = result.indices[i]
            self.map_headers[f"S_{name}"] = f"{bounds}\n# method={method} input={name} n={result.n}"
        self.maps["variance"] = result.variance
        self.map_headers["variance"] = f"{bounds}\n# method={method} quantity=variance n={result.n}"

    # output

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "indices.csv", INDEX_COLUMNS, self.index_rows)
        if any(a["method"] == "hsic" for a in self.config.analyses):
            _write_csv(out / "pvalues.csv", PVALUE_COLUMNS, self.pvalue_rows)
        if self.maps:
            (out / "maps").mkdir(exist_ok=True)
            for key, values in self.maps.items():
                lines = [self.map_headers[key]]
                lines += [",".join(_fmt(float(v)) for v in row) for row in values]
                (out / "maps" / f"{key}.csv").write_text("\n".join(lines) + "\n")
        (out / "summary.json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")

    def summary(self) -> dict:
        c = self.config
        return {
            "version": __version__,
            "seed": c.seed,
            "inputs": c.inputs,
            "fixed": c.fixed_inputs(),
            "model": c.model,
            "grid": c.grid,
            "levels": None if self.levels is None else
            {"c_min": self.levels.c_min, "c_max": self.levels.c_max, "nc": self.levels.nc},
            "bootstrap": c.bootstrap,
            "analyses": [{**a, **r} for a, r in zip(c.analyses, self.records)],
        }


def _write_csv(path: Path, columns, rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buf.getvalue())


def run(config: RunConfig, out_dir=None) -> int:
    """Run every analysis and write the artifacts; returns the exit status."""
    out = Path(out_dir) if out_dir is not None else config.base_dir / config.output
    runner = Runner(config)
    status = runner.run()
    runner.write(out)
    return status


def validate_file(path) -> list[str]:
    """Dry-run report for a config file: one line per problem, empty when valid."""
    try:
        text = read_config_text(path)
        raw = parse_toml(text)
    except ConfigError as exc:
        return [str(exc)]
    report = []
    for key, msg in validate(raw, Path(path).parent):
        report.append(str(ConfigError(msg, key=key, line=locate_key(text, key))))
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapsens", description="Sensitivity analysis of map-valued models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the analyses of a config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("-o", "--output", type=Path, default=None, help="output directory (overrides the config)")
    p_val = sub.add_parser("validate", help="check a config file without evaluating the model")
    p_val.add_argument("config", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        report = validate_file(args.config)
        for line in report:
            print(line, file=sys.stderr)
        if not report:
            print(f"{args.config}: ok")
        return EXIT_CONFIG if report else EXIT_OK
    try:
        config = load_config(args.config)
        status = run(config, args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateModelError as exc:
        print(f"degenerate model: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except MapSensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if status == EXIT_DEGENERATE:
        print("warning: some estimators were degenerate; see summary.json", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
