"""Command-line entry point: ``maxineq run | catalog | replay``.

Exit status of ``run`` and ``replay``: 0 when every check passes, 1 when any
check fails, 2 when none fails but some are inconclusive. Configuration and
usage errors exit with 3; a replay whose outputs differ from the manifest
exits with 4.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
from pathlib import Path
from typing import Optional

import numpy as np

from . import verify as V
from .analytic import GROWTH_FORMULAS
from .config import CHECK_KINDS, ConfigError, RunConfig, load_config, resolve
from .moderate import DESCRIPTOR_SYNTAX, catalog as moderate_catalog
from .processes import BESQ, OU, BMDrift, ParameterError, ReflectedBMDrift

EXIT_STATUS = {V.PASS: 0, V.FAIL: 1, V.INCONCLUSIVE: 2}
EXIT_CONFIG_ERROR = 3
EXIT_REPLAY_MISMATCH = 4
OUTPUT_ROOT_ENV = "MAXINEQ_OUTPUT_ROOT"
MANIFEST = "manifest.json"


# ---------------------------------------------------------------------------
# serialization


def _plain(obj):
    """Convert numpy scalars and arrays, tuples and complex numbers to JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def format_float(x: float) -> str:
    """17 significant digits; non-finite values as JSON-compatible tokens."""
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, ".17g")
    return text if any(c in text for c in ".en") else text + ".0"


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k, ensure_ascii=False)}: {enc(o[k], level + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return format_float(o)
        return json.dumps(o, ensure_ascii=False)

    return enc(_plain(obj), 0) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    if v is None:
        return ""
    return str(v)


def csv_text(header, rows) -> str:
    """RFC 4180 CSV: CRLF line ends, minimal quoting, header row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def atomic_write(path: Path, data: bytes) -> None:
    """Write through a temporary file in the same directory and rename into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# check runners; each returns (reports, csv header, csv rows, plot specs)


def _envelope_limits(cfg: RunConfig, label, spec, normalized) -> dict:
    th = cfg.data["thresholds"]
    frozen = {}
    for clabel, cspec, cnorm in V.canonical_envelope_processes():
        if clabel == label and cspec == spec and cnorm == normalized:
            frozen = V.load_thresholds()["envelope"].get(label, {})
    limits = {}
    for d in cfg.data["F"]:
        if d in th.get("spread", {}).get(label, {}):
            limits[d] = float(th["spread"][label][d])
        elif "spread_limit" in th:
            limits[d] = float(th["spread_limit"])
        elif d in frozen:
            limits[d] = float(frozen[d])
        else:
            limits[d] = 10.0
    return limits


def run_envelope(cfg: RunConfig):
    th = cfg.data["thresholds"]
    reports, rows, plots = [], [], []
    t_grid = cfg.times()
    for label, spec, normalized in cfg.processes():
        rep = V.two_sided_check(
            spec, cfg.data["F"], t_grid, cfg.n_paths, _envelope_limits(cfg, label, spec, normalized), cfg.seed,
            normalized, min_ratio=float(th.get("min_ratio", 1e-3)), z=float(th.get("z", 1.96)), label=label,
            workers=cfg.workers,
        )
        reports.append(rep)
        for rec in rep.witness["per_F"]:
            for r in rec["rows"]:
                rows.append([label, rec["F"], r["t"], r["mean"], r["stderr"], r["reference"], r["ratio"], r["ci_low"], r["ci_high"]])
            plots.append((f"envelope_{label}_{_slug(rec['F'])}.svg", label, rec))
    header = ["process", "F", "t", "mean", "stderr", "reference", "ratio", "ci_low", "ci_high"]
    return reports, header, rows, plots


def controllability_defaults(spec):
    """(beta, gamma, C) used when the config gives none."""
    if isinstance(spec, OU):
        return 2.0, 1.0, 1.0
    if isinstance(spec, BESQ):
        return V.besq_controllability_constants(spec.alpha)
    if isinstance(spec, ReflectedBMDrift):
        return 2.0, 1.0, 2.0
    return None


def run_controllability(cfg: RunConfig):
    opts = cfg.data["controllability"]
    z = float(cfg.data["thresholds"].get("z", 4.0))
    t_grid = opts.get("t_grid", np.logspace(-1, 1, 4).tolist())
    lam = opts.get("lambda_grid", np.logspace(-0.5, 1, 4).tolist())
    reports, rows = [], []
    for label, spec, _ in cfg.processes():
        consts = controllability_defaults(spec)
        if all(k in opts for k in ("beta", "gamma", "C")):
            consts = (opts["beta"], opts["gamma"], opts["C"])
        elif consts is None:
            raise ConfigError("controllability", f"no default (beta, gamma, C) for {spec.kind}; set all three")
        else:
            consts = tuple(opts.get(k, v) for k, v in zip(("beta", "gamma", "C"), consts))
        rep = V.controllability_check(spec, *consts, t_grid, lam, cfg.n_paths, cfg.seed, z=z, workers=cfg.workers)
        rep.params["label"] = label
        reports.append(rep)
        for p in rep.witness["points"]:
            rows.append([label, p["t"], p["lambda"], p["start"], p["left"], *p["left_ci"], p["right"], *p["right_ci"],
                         p["C_right_upper"], p["vacuous"], p["ok"]])
    header = ["process", "t", "lambda", "start", "left", "left_ci_low", "left_ci_high", "right", "right_ci_low",
              "right_ci_high", "C_right_upper", "vacuous", "ok"]
    return reports, header, rows, []


def analytic_phi_for(spec):
    """Closed-form phi bounds: alpha delta^2 for OU, delta for drifted Brownian motion."""
    if isinstance(spec, OU):
        return lambda d, a=spec.alpha: a * d * d
    if isinstance(spec, BMDrift):
        return lambda d: d
    return None


def run_good_lambda(cfg: RunConfig):
    opts = cfg.data["good_lambda"]
    z = float(cfg.data["thresholds"].get("z", 4.0))
    reports, rows = [], []
    for label, spec, _ in cfg.processes():
        rep = V.good_lambda_process_check(
            spec, opts.get("levels", [0.5, 1.0, 2.0]), opts.get("cap", 200.0), cfg.n_paths,
            opts.get("deltas", [2.0**-k for k in range(1, 5)]), opts.get("beta", 2.0), analytic_phi_for(spec),
            cfg.seed, z=z, workers=cfg.workers,
        )
        rep.params["label"] = label
        reports.append(rep)
        for direction, prof in (("lower", rep.witness["profile"]), ("upper", rep.witness["upper_direction"])):
            for r in prof:
                rows.append([label, direction, r["delta"], r["phi_hat"], r["ci"][0], r["ci"][1], r["lambda"], r.get("analytic")])
    header = ["process", "direction", "delta", "phi_hat", "ci_low", "ci_high", "lambda", "analytic_phi"]
    return reports, header, rows, []


def run_lp_bound(cfg: RunConfig):
    opts = cfg.data["lp_bound"]
    reports, rows = [], []
    for alpha in opts.get("alpha", [1.0, 2.0]):
        for p in opts.get("p", [0.25, 0.5]):
            rep = V.lp_bound_check(alpha, p, opts.get("t", [0.5, 1.0, 4.0]), cfg.n_paths, cfg.seed, workers=cfg.workers)
            reports.append(rep)
            for r in rep.witness["rows"]:
                rows.append([alpha, p, r["t"], r["estimate"], r["stderr"], r["bound"], r["ok"]])
    return reports, ["alpha", "p", "t", "estimate", "stderr", "bound", "ok"], rows, []


def identity_sources(pairs):
    """Named pair sources with the parameter sets of the identity suite."""
    out = []
    for pair in pairs:
        if pair == "complex_ou_vs_cir":
            for a in (0.5, 1.0):
                for t in (0.5, 2.0):
                    out.append((f"complex_ou_vs_cir(a={a:g},b=1,t={t:g})", V.pair_complex_ou_vs_cir(a, 1.0, t)))
        elif pair == "cir_vs_time_changed_besq":
            out.append(("cir_vs_time_changed_besq(a=1,b=-1,c=1,t=1)", V.pair_cir_vs_time_changed_besq(1.0, -1.0, 1.0, 1.0)))
        elif pair == "besq_additivity":
            out.append(("besq_additivity(1+1,t=1)", V.pair_besq_additivity(1.0, 1.0, 1.0)))
            out.append(("besq_additivity(0.5+0.5,t=1)", V.pair_besq_additivity(0.5, 0.5, 1.0)))
        elif pair == "time_changed_cbm_vs_complex_ou":
            out.append(("time_changed_cbm_vs_complex_ou(a=1,b=1,t=1)", V.pair_time_changed_cbm_vs_complex_ou(1.0, 1.0, 1.0)))
    return out


def run_identities(cfg: RunConfig):
    from .config import IDENTITY_PAIRS

    level = float(cfg.data["thresholds"].get("ks_level", 0.01))
    reports, rows = [], []
    for name, src in identity_sources(cfg.data["identities"].get("pairs", list(IDENTITY_PAIRS))):
        rep = V.distribution_equiv(src, cfg.n_paths, level, cfg.seed, name)
        reports.append(rep)
        w = rep.witness
        rows.append([name, w["n"], w["ks"], w["critical"], w["p_value"], rep.verdict])
    return reports, ["pair", "n", "ks", "critical", "p_value", "verdict"], rows, []


def run_conformal(cfg: RunConfig):
    opts = cfg.data["conformal"]
    th = cfg.data["thresholds"]
    map_name = opts.get("map", "square")
    frozen = V.load_thresholds()["conformal"] if map_name == "square" else {}
    limits = {}
    for d in cfg.data["F"]:
        if d in th.get("conformal", {}):
            limits[d] = float(th["conformal"][d])
        elif d in frozen:
            limits[d] = frozen[d]
        else:
            limits[d] = math.inf
    rep = V.conformal_scenario(
        map_name, opts.get("T", 10.0), cfg.data["F"], cfg.n_paths, cfg.seed, opts.get("times"),
        opts.get("n_steps", 2**15), limits, compare_complex_bm=opts.get("compare_complex_bm", map_name == "identity"),
        z=float(th.get("z", 4.0)), workers=cfg.workers,
    )
    rows = []
    for rec in rep.witness["per_F"]:
        for form in ("mtgl1", "mtgl2"):
            for r in rec[form]["rows"]:
                rows.append([map_name, rec["F"], form, r["t"], r["ratio"], r["ci_low"], r["ci_high"]])
    return [rep], ["map", "F", "form", "t", "ratio", "ci_low", "ci_high"], rows, []


RUNNERS = {
    "envelope": run_envelope,
    "controllability": run_controllability,
    "good_lambda": run_good_lambda,
    "lp_bound": run_lp_bound,
    "identities": run_identities,
    "conformal": run_conformal,
}


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in text).strip("_")


def plot_envelope_svg(label: str, rec: dict) -> bytes:
    """Ratio envelope with its confidence band as SVG bytes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = [r["t"] for r in rec["rows"]]
    with matplotlib.rc_context({"svg.hashsalt": "maxineq", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.fill_between(t, [r["ci_low"] for r in rec["rows"]], [r["ci_high"] for r in rec["rows"]], alpha=0.3, label="CI")
        ax.plot(t, [r["ratio"] for r in rec["rows"]], "o-", label="E F(X*_t) / F(g(t))")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("ratio")
        ax.set_title(f"{label}, F = {rec['F']}, spread {rec['spread']:.3g}")
        ax.legend()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# orchestration


def versions() -> dict:
    import numba
    import scipy

    from importlib.metadata import PackageNotFoundError, version

    try:
        own = version("maxineq")
    except PackageNotFoundError:
        own = "unknown"
    return {"maxineq": own, "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def execute(cfg: RunConfig, out_dir: Path, log=print) -> tuple[int, dict]:
    """Run the selected checks, write all artifacts and return (exit status, manifest)."""
    out_dir = Path(out_dir)
    outputs = {}
    check_verdicts = {}

    def emit(name: str, data: bytes):
        atomic_write(out_dir / name, data)
        outputs[name] = sha256(data)

    for kind in CHECK_KINDS:
        if kind not in cfg.data["checks"]:
            continue
        reports, header, rows, plots = RUNNERS[kind](cfg)
        verdict = V.combine_verdicts([r.verdict for r in reports])
        check_verdicts[kind] = verdict
        emit(f"{kind}.csv", csv_text(header, rows).encode("utf-8"))
        emit(f"report_{kind}.json", dumps_json({"check": kind, "verdict": verdict, "reports": [r.to_dict() for r in reports]}).encode("utf-8"))
        if cfg.data["plots"]:
            for fname, label, rec in plots:
                atomic_write(out_dir / "plots" / fname, plot_envelope_svg(label, rec))
        log(f"{kind}: {verdict}")
    overall = V.combine_verdicts(list(check_verdicts.values()))
    status = EXIT_STATUS[overall]
    manifest = {
        "format": 1,
        "config": cfg.to_dict(),
        "config_source": cfg.source,
        "seeds": {"master": cfg.seed},
        "threshold_overrides": cfg.data["thresholds"],
        "versions": versions(),
        "outputs": outputs,
        "checks": check_verdicts,
        "verdict": overall,
        "exit_status": status,
    }
    atomic_write(out_dir / MANIFEST, dumps_json(manifest).encode("utf-8"))
    return status, manifest


def _default_out(cfg: RunConfig, name: str) -> Path:
    if cfg.data.get("output"):
        return Path(cfg.data["output"])
    root = os.environ.get(OUTPUT_ROOT_ENV, "maxineq-runs")
    return Path(root) / name


def _overrides(args) -> dict:
    return {"seed": args.seed, "workers": args.workers, "n_paths": args.n_paths}


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out = Path(args.out) if args.out else _default_out(cfg, Path(args.config).stem)
    status, _ = execute(cfg, out)
    print(f"outputs written to {out}")
    return status


def cmd_replay(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if "config" not in manifest:
        raise ConfigError("manifest", f"{manifest_path} has no 'config' section")
    overrides = {"workers": args.workers}
    cfg = resolve(manifest["config"], source=str(manifest_path), overrides=overrides)
    out = Path(args.out) if args.out else manifest_path.parent / "replay"
    status, new = execute(cfg, out)
    recorded = manifest.get("outputs", {})
    mismatched = sorted(k for k in recorded if new["outputs"].get(k) != recorded[k])
    if mismatched:
        for k in mismatched:
            print(f"replay mismatch: {k}", file=sys.stderr)
        return EXIT_REPLAY_MISMATCH
    print(f"replay reproduced {len(recorded)} outputs byte-identically in {out}")
    return status


def catalog_text() -> str:
    names = [
        ("OU", "ou"),
        ("BMDrift", "bm_drift"),
        ("ReflectedBMDrift", "reflected_bm_drift"),
        ("CIR", "cir"),
        ("BESQ", "besq"),
        ("Bessel", "bessel"),
        ("RadialOU", "radial_ou"),
        ("ComplexOU", "complex_ou"),
        ("ComplexBM", "complex_bm"),
        ("ComplexBM (normalized)", "complex_bm_normalized"),
    ]
    lines = ["Processes"]
    for display, tag in names:
        formula = GROWTH_FORMULAS[tag]
        if formula.startswith("g_μ(t) = "):
            formula = formula[len("g_μ(t) = "):]
        lines.append(f"  {display}: g(t) = {formula}")
    lines.append("")
    lines.append("Moderate-function descriptors")
    for syntax, meaning in DESCRIPTOR_SYNTAX:
        lines.append(f"  {syntax:22s} {meaning}")
    lines.append("")
    lines.append("Catalog (empirical sup F(2x)/F(x) on [1e-6, 1e6])")
    for F in moderate_catalog():
        lines.append(f"  {F.descriptor:12s} {F.name:22s} {F.certificate.sup_ratio:.6g}")
    return "\n".join(lines) + "\n"


def cmd_catalog(args) -> int:
    sys.stdout.write(catalog_text())
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="maxineq", description="Monte Carlo verification of maximal inequalities for diffusions.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run the checks selected in a TOML config")
    run.add_argument("config")
    replay = sub.add_parser("replay", help="re-run a manifest and compare outputs byte for byte")
    replay.add_argument("manifest")
    for p in (run, replay):
        p.add_argument("--out", help=f"output directory (default: config 'output', else ${OUTPUT_ROOT_ENV}/<name>)")
        p.add_argument("--workers", type=int, help="worker processes (outputs do not depend on it)")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--n-paths", type=int, dest="n_paths", help="override n_paths")
    sub.add_parser("catalog", help="list processes, growth functions and moderate-function descriptors")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "replay":
            return cmd_replay(args)
        return cmd_catalog(args)
    except (ConfigError, ParameterError, OSError, json.JSONDecodeError) as exc:
        print(f"maxineq: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
