"""``spectral-clt`` command line: theory, simulation, comparison and grid sweeps.

Every CSV written here starts with the schema line ``# spectral-clt v1``;
further ``#`` lines carry run metadata. Floats are written with ``repr`` so
re-runs with the same configuration are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .blockmodel import (SbmSpec, as_block_params, example_sbm, load_model, sbm_to_block_params,
                         sizes_from_alpha)
from .contour import build_contour, dump_kernels, parse_testfn, theory
from .errors import NumericalError, SpectralCltError, ValidationError
from .oracle import exact_trace_moment, exact_var_tr_h2
from .qve import lsd_density, spectral_edge
from .simulate import (EMPIRICAL_P, TRUE_P, monte_carlo, qq_normal,
                       qq_two_sample, summarize, two_sample_compare)

__all__ = ["GridResult", "csv_text", "main", "read_csv", "read_samples", "run_grid", "run_qq",
           "run_theory", "samples_csv"]

SCHEMA = "# spectral-clt v1"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
_WHICH = {"true": TRUE_P, "empirical": EMPIRICAL_P, TRUE_P: TRUE_P, EMPIRICAL_P: EMPIRICAL_P}


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header, rows, meta=(), trailer=()):
    buf = io.StringIO()
    buf.write(SCHEMA + "\n")
    for line in meta:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    for line in trailer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _emit(text, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def read_csv(path):
    """Return ``(meta, rows)``; ``meta`` maps ``key=value`` comment lines."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != SCHEMA:
        raise ValidationError(f"{path}: missing '{SCHEMA}' header")
    meta, body = {}, []
    for line in lines[1:]:
        if line.startswith("#"):
            for item in line[1:].split(";"):
                if "=" in item:
                    k, v = item.split("=", 1)
                    meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    return meta, list(csv.DictReader(body))


def read_samples(path) -> tuple[dict, np.ndarray]:
    meta, rows = read_csv(path)
    try:
        values = np.array([float(r["value"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"{path}: expected columns replicate,value") from exc
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ValidationError(f"{path}: samples must be non-empty and finite")
    return meta, values


def _require_sbm(model) -> SbmSpec:
    if not isinstance(model, SbmSpec):
        raise ValidationError("simulation needs an SBM model (a 'ptilde' matrix)")
    return model


# -- theory -------------------------------------------------------------------

THEORY_FIELDS = ("f", "mean", "variance", "centering", "nodes_used", "radius")


def run_theory(model, fs, nodes: int = 512):
    """One ``TheoryResult`` per test-function spec, sharing a contour."""
    params = as_block_params(model)
    contour = build_contour(params, nodes)
    return [theory(parse_testfn(spec), params, contour=contour) for spec in fs]


def _theory_cmd(a):
    model = load_model(a.model)
    results = run_theory(model, a.f, a.nodes)
    if a.format == "json":
        text = json.dumps({"schema": SCHEMA[2:], "results": [asdict(r) for r in results]},
                          indent=2) + "\n"
    else:
        text = csv_text(THEORY_FIELDS, [[getattr(r, k) for k in THEORY_FIELDS] for r in results])
    _emit(text, a.out)
    if a.dump_kernels:
        params = as_block_params(model)
        rows = ([z1.real, z1.imag, z2.real, z2.imag, m.real, m.imag, c.real, c.imag]
                for z1, z2, m, c in dump_kernels(params, build_contour(params, a.nodes)))
        header = ("z1_re", "z1_im", "z2_re", "z2_im", "mean_re", "mean_im", "cov_re", "cov_im")
        Path(a.dump_kernels).write_text(csv_text(header, rows))


# -- lsd ----------------------------------------------------------------------

def _lsd_cmd(a):
    params = as_block_params(load_model(a.model))
    sup = spectral_edge(params)
    lo = -sup.edge if a.xmin is None else a.xmin
    hi = sup.edge if a.xmax is None else a.xmax
    xs = np.linspace(lo, hi, a.points)
    dens = lsd_density(params, xs, a.eta)
    meta = [f"edge={sup.edge!r}; crude_edge={sup.crude!r}; eta={a.eta!r}"]
    _emit(csv_text(("x", "density"), zip(xs, np.atleast_1d(dens)), meta), a.out)


# -- simulate -----------------------------------------------------------------

def samples_csv(samples, model_path):
    meta = [f"model={model_path}; renormalization={samples.renormalization}; f={samples.f}; "
            f"seed={samples.seed}; n={samples.n}; nr={len(samples)}"]
    return csv_text(("replicate", "value"), enumerate(samples.values), meta)


def _simulate_cmd(a):
    spec = _require_sbm(load_model(a.model))
    f = parse_testfn(a.f[0])
    samples = monte_carlo(spec, f, a.nr, _WHICH[a.which], a.seed, a.threads, model_id=a.model)
    _emit(samples_csv(samples, a.model), a.out)


# -- compare ------------------------------------------------------------------

COMPARE_FIELDS = ("f", "n", "nr", "emp_mean", "theory_mean", "abs_diff_mean",
                  "emp_var", "theory_var", "abs_diff_var", "ks")


def _compare_cmd(a):
    meta, values = read_samples(a.samples)
    f_spec = meta.get("f", a.f[0])
    n = int(meta["n"]) if "n" in meta else None
    if a.theory:
        _, rows = read_csv(a.theory)
        row = next((r for r in rows if r["f"] == f_spec), None)
        if row is None:
            raise ValidationError(f"{a.theory}: no theory row for f={f_spec}")
        mean, var, cent = float(row["mean"]), float(row["variance"]), float(row["centering"])
    else:
        if a.model is None:
            raise ValidationError("compare needs --theory or --model")
        res = run_theory(load_model(a.model), [f_spec], a.nodes)[0]
        mean, var, cent = res.mean, res.variance, res.centering
    if n is None:
        raise ValidationError(f"{a.samples}: sample metadata lacks n")
    predicted = n * cent + mean
    s = summarize(values, predicted, var)
    row = [f_spec, n, values.size, s.mean, predicted, s.abs_diff_mean, s.variance, var,
           s.abs_diff_var, s.ks]
    _emit(csv_text(COMPARE_FIELDS, [row]), a.out)
    if a.qq_out:
        Path(a.qq_out).write_text(
            csv_text(("theoretical_quantile", "sample_quantile"), s.qq))


# -- grid ---------------------------------------------------------------------

GRID_FIELDS = ("p", "q", "theory_mean", "emp_mean", "theory_var", "emp_var",
               "abs_diff_mean", "abs_diff_var")


@dataclass(frozen=True)
class GridResult:
    rows: list
    max_abs_diff_mean: float
    max_abs_diff_var: float

    def to_csv(self, meta=()):
        trailer = [f"max_abs_diff_mean={self.max_abs_diff_mean!r}",
                   f"max_abs_diff_var={self.max_abs_diff_var!r}"]
        return csv_text(GRID_FIELDS, self.rows, meta, trailer)


def run_grid(ps, qs, alpha, n: int, nr: int, f_spec: str = "poly:0,0,1", seed: int = 0,
             which: str = TRUE_P, threads: int | None = None, nodes: int = 512) -> GridResult:
    """Theory against Monte Carlo over ``P = (p - q) I + q 11^T`` for all ``(p, q)``.

    Every cell uses the same master seed, so neighbouring cells share their
    uniform draws.
    """
    f = parse_testfn(f_spec)
    sizes = sizes_from_alpha(alpha, n)
    rows = []
    for p in ps:
        for q in qs:
            spec = example_sbm(p, q, sizes)
            res = theory(f, sbm_to_block_params(spec), nodes)
            samples = monte_carlo(spec, f, nr, which, seed, threads)
            s = summarize(samples)
            tm = res.lss_mean(spec.n)
            rows.append([float(p), float(q), tm, s.mean, res.variance, s.variance,
                         abs(s.mean - tm), abs(s.variance - res.variance)])
    return GridResult(rows=rows, max_abs_diff_mean=max(r[6] for r in rows),
                      max_abs_diff_var=max(r[7] for r in rows))


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad number list {text!r}") from exc


def _grid_cmd(a):
    ps, qs, alpha = _floats(a.p), _floats(a.q), _floats(a.alpha)
    for v in ps + qs:
        if not 0 < v < 1:
            raise ValidationError(f"grid values must lie in (0, 1), got {v}")
    res = run_grid(ps, qs, alpha, a.n, a.nr, a.f[0], a.seed, _WHICH[a.which], a.threads, a.nodes)
    meta = [f"alpha={a.alpha}; n={a.n}; nr={a.nr}; seed={a.seed}; f={a.f[0]}; "
            f"renormalization={_WHICH[a.which]}"]
    _emit(res.to_csv(meta), a.out)


# -- qq -----------------------------------------------------------------------

def run_qq(a, b=None, *, resample: bool = False) -> np.ndarray:
    """Normal qq points for one sample set, or two-sample qq pairs."""
    if b is None:
        return qq_normal(a)
    return qq_two_sample(a, b, resample=resample)


def _qq_cmd(a):
    _, x = read_samples(a.samples[0])
    if len(a.samples) > 2:
        raise ValidationError("qq takes one or two sample files")
    if len(a.samples) == 2:
        _, y = read_samples(a.samples[1])
        pts = run_qq(x, y, resample=a.resample)
        meta = [f"ks2={two_sample_compare(x, y)!r}; max_dev={float(np.max(np.abs(pts[:, 1] - pts[:, 0])))!r}"]
    else:
        pts = run_qq(x)
        meta = [f"max_dev={float(np.max(np.abs(pts[:, 1] - pts[:, 0])))!r}"]
    _emit(csv_text(("theoretical_quantile", "sample_quantile"), pts, meta), a.out)


# -- oracle -------------------------------------------------------------------

def _oracle_cmd(a):
    params = as_block_params(load_model(a.model))
    rows = [[f"E Tr H^{k}", a.n, exact_trace_moment(params, a.n, k)] for k in a.k]
    rows.append(["Var Tr H^2", a.n, exact_var_tr_h2(params, a.n)])
    _emit(csv_text(("quantity", "n", "value"), rows), a.out)


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectral-clt",
                                 description="CLT for linear spectral statistics of SBM matrices")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, model=True, f=True):
        if model:
            p.add_argument("--model", required=True, help="model JSON file")
        if f:
            p.add_argument("--f", action="append", default=None,
                           help="test function: poly:c0,c1,... or exp (repeatable)")
        p.add_argument("--out", default=None, help="output file (default stdout)")

    def mc(p):
        p.add_argument("--nr", type=int, default=400)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--which", choices=sorted(_WHICH), default="true")
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("theory", help="CLT mean, variance and centering")
    common(p)
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--dump-kernels", default=None, metavar="PATH")
    p.set_defaults(func=_theory_cmd)

    p = sub.add_parser("lsd", help="limiting spectral density on a grid")
    common(p, f=False)
    p.add_argument("--xmin", type=float, default=None)
    p.add_argument("--xmax", type=float, default=None)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--eta", type=float, default=1e-6)
    p.set_defaults(func=_lsd_cmd)

    p = sub.add_parser("simulate", help="Monte Carlo LSS samples")
    common(p)
    mc(p)
    p.set_defaults(func=_simulate_cmd)

    p = sub.add_parser("compare", help="samples against theory")
    common(p, model=False)
    p.add_argument("--model", default=None)
    p.add_argument("--samples", required=True)
    p.add_argument("--theory", default=None, help="theory CSV (else computed from --model)")
    p.add_argument("--nodes", type=int, default=512)
    p.add_argument("--qq-out", default=None)
    p.set_defaults(func=_compare_cmd)

    p = sub.add_parser("grid", help="theory vs Monte Carlo over a (p, q) grid")
    common(p, model=False)
    mc(p)
    p.add_argument("--p", required=True, help="comma-separated within-block probabilities")
    p.add_argument("--q", required=True, help="comma-separated between-block probabilities")
    p.add_argument("--alpha", default="0.25,0.25,0.5")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--nodes", type=int, default=512)
    p.set_defaults(func=_grid_cmd)

    p = sub.add_parser("qq", help="qq points for one or two sample files")
    common(p, model=False, f=False)
    p.add_argument("--samples", action="append", required=True)
    p.add_argument("--resample", action="store_true")
    p.set_defaults(func=_qq_cmd)

    p = sub.add_parser("oracle", help="exact finite-n trace moments")
    common(p, f=False)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, action="append", default=None)
    p.set_defaults(func=_oracle_cmd)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "f", None) is None and hasattr(args, "f"):
        args.f = ["poly:0,0,1"]
    if getattr(args, "k", None) is None and hasattr(args, "k"):
        args.k = [1, 2, 3, 4]
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SpectralCltError as exc:
        print(f"error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def _origin(exc) -> str:
    tb = exc.__traceback__
    mod = "spectral_clt"
    while tb is not None:
        name = tb.tb_frame.f_globals.get("__name__", "")
        if name.startswith("spectral_clt."):
            mod = name
        tb = tb.tb_next
    return mod


if __name__ == "__main__":
    sys.exit(main())
