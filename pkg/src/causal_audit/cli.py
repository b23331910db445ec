"""Command-line audit pipeline.

    causal-audit audit --input data.csv --samples 1000000 --seed 7
    causal-audit simulate --generator example1:delta=0.25,epsilon=0.5 --count 1000
    causal-audit vertices --n 3

Every command prints one JSON record (``--format json``, keys in fixed
order) or a short text summary.  Failures print an error record instead and
exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from dataclasses import dataclass, field
from importlib.resources import files
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import bayes, bounds, freq, ivcore, scm, tables
from .tables import ContingencyTable3, PositivityError, TableError

BUNDLED = "ucb_admissions.csv"
SEED_ENV = "CAUSAL_AUDIT_SEED"
COMPONENTS = ("ml", "bayes", "wrr", "ci", "dp", "bounds")
HIST_DRAWS = 10_000
HIST_BINS = 20

UNDECIDABLE = "UNDECIDABLE"
REJECTED = "REJECTED"
UNTESTABLE = "UNTESTABLE"


def bundled_path(name: str = BUNDLED) -> Path:
    return Path(str(files("causal_audit").joinpath("data", name)))


@dataclass(frozen=True)
class AuditConfig:
    input: Optional[str] = None
    coding: Optional[dict] = None
    alpha: float = 1.0
    n_samples: int = 10**6
    level: float = 0.95
    seed: int = 0
    tolerance: float = 0.0
    test_level: float = 0.05
    reject_threshold: float = 0.05
    components: Tuple[str, ...] = COMPONENTS

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        unknown = set(self.components) - set(COMPONENTS)
        if unknown:
            raise ValueError(f"unknown components {sorted(unknown)}")


@dataclass
class AuditReport:
    dataset: dict
    verdict: str
    ml_iv: Optional[dict] = None
    bayes: Optional[dict] = None
    wrr: Optional[dict] = None
    ci_test: Optional[dict] = None
    dp_test: Optional[dict] = None
    cde: Optional[list] = None
    nde: Optional[dict] = None
    plot: Optional[dict] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "dataset": self.dataset,
            "ml_iv": self.ml_iv,
            "bayes": self.bayes,
            "wrr": self.wrr,
            "ci_test": self.ci_test,
            "dp_test": self.dp_test,
            "cde": self.cde,
            "nde": self.nde,
            "plot": self.plot,
            "notes": self.notes,
        }


def load_table(path: Optional[str], coding: Optional[dict] = None) -> ContingencyTable3:
    source = Path(path) if path else bundled_path()
    return tables.parse_long_csv(source.read_text(encoding="utf-8"), coding)


def dataset_summary(table: ContingencyTable3, source: str) -> dict:
    c = table.counts
    per_sex = c.sum(axis=1)
    strata = []
    for d, label in enumerate(table.space.d_labels):
        row = {"department": str(label)}
        for s, sl in enumerate(table.space.s_labels):
            applied = int(c[s, d].sum())
            row[str(sl)] = {"applied": applied, "accepted": int(c[s, d, 1]),
                            "rate": (c[s, d, 1] / applied) if applied else None}
        strata.append(row)
    return {
        "source": source,
        "total": table.total,
        "n_departments": table.n,
        "labels": {"sex": list(map(str, table.space.s_labels)),
                   "department": list(map(str, table.space.d_labels)),
                   "admitted": list(map(str, table.space.a_labels))},
        "overall": {str(sl): {"applied": int(per_sex[s].sum()),
                              "rate": (per_sex[s, 1] / per_sex[s].sum()) if per_sex[s].sum() else None}
                    for s, sl in enumerate(table.space.s_labels)},
        "strata": strata,
    }


def posterior_max_lhs(table: ContingencyTable3, prior: bayes.DirichletSpec, draws: int, seed: int) -> np.ndarray:
    post = bayes.posterior_params(table, prior)
    theta = bayes.sample_simplex(post, [int(seed), 1 << 20], size=draws)
    K = theta / theta.sum(axis=(2, 3), keepdims=True)
    return ivcore.cross_sums(K).max(axis=(-2, -1))


def run_audit(config: AuditConfig) -> AuditReport:
    source = config.input or f"bundled:{BUNDLED}"
    try:
        table = load_table(config.input, config.coding)
    except PositivityError as exc:
        report = AuditReport({"source": source}, UNTESTABLE)
        report.notes.append(f"positivity failure: {exc}")
        return report
    summary = dataset_summary(table, source)
    n_s = table.counts.sum(axis=(1, 2))
    if np.any(n_s == 0):
        missing = [str(table.space.s_labels[s]) for s in (0, 1) if n_s[s] == 0]
        report = AuditReport(summary, UNTESTABLE)
        report.notes.append(f"positivity failure: no records for sex {missing}")
        return report

    on = set(config.components)
    report = AuditReport(summary, UNDECIDABLE)
    kernel = tables.kernel_from_table(table)
    if "ml" in on:
        report.ml_iv = freq.ml_iv_check(table).to_dict()
    prior = bayes.DirichletSpec.symmetric(config.alpha, table.n)
    if "bayes" in on:
        rep = bayes.posterior_model_probability(table, prior, config.n_samples, config.level,
                                                config.seed, config.tolerance)
        report.bayes = rep.to_dict()
        lhs = posterior_max_lhs(table, prior, min(HIST_DRAWS, config.n_samples), config.seed)
        hist, edges = np.histogram(lhs, bins=HIST_BINS, range=(0.0, 2.0))
        report.plot = {"posterior_max_lhs_histogram": {"edges": edges.tolist(), "counts": hist.tolist()}}
        if rep.ci[1] < config.reject_threshold:
            report.verdict = REJECTED
    if "wrr" in on:
        report.wrr = freq.wrr_test(table, config.test_level).to_dict()
    if "ci" in on:
        try:
            report.ci_test = freq.cond_indep_test(table, config.test_level).to_dict()
        except freq.UntestableError as exc:
            report.notes.append(f"ci-test skipped: {exc}")
    if "dp" in on:
        report.dp_test = freq.demographic_parity_test(table, config.test_level).to_dict()
    if "bounds" in on:
        report.cde = [dict(department=str(lbl), **bounds.cde_bounds(kernel, d).to_dict())
                      for d, lbl in enumerate(table.space.d_labels)]
        nde: Dict = {}
        if table.n == 2:
            nde["bounds"] = {k: bounds.nde_bounds_binary(kernel, k).to_dict() for k in ("0->1", "1->0")}
        try:
            joint = tables.empirical_joint(table)
            nde["point_no_confounding"] = {"0->1": bounds.nde_point(joint, 0, 1),
                                           "1->0": bounds.nde_point(joint, 1, 0)}
        except PositivityError as exc:
            report.notes.append(f"NDE point estimate skipped: {exc}")
        report.nde = nde or None
    return report


def format_audit_text(report: AuditReport) -> str:
    d = report.dataset
    lines = [f"verdict: {report.verdict}"]
    if "total" in d:
        lines.append(f"data: {d['source']} ({d['total']} records, {d['n_departments']} departments)")
    else:
        lines.append(f"data: {d['source']}")
    for sex, info in d.get("overall", {}).items():
        rate = "n/a" if info["rate"] is None else f"{info['rate']:.4f}"
        lines.append(f"  {sex}: {info['applied']} applied, acceptance {rate}")
    if report.ml_iv:
        lines.append(f"ML estimate: max LHS {report.ml_iv['max_lhs']:.6f}, "
                     f"satisfied={report.ml_iv['satisfied']}")
    if report.bayes:
        b = report.bayes
        lines.append(f"Bayes: {b['n_satisfying']}/{b['n_samples']} posterior draws satisfy; "
                     f"{b['level']:.0%} CI [{b['ci'][0]:.10f}, {b['ci'][1]:.10f}]")
    if report.wrr:
        gam = [c["gamma_hat"] for c in report.wrr["cells"]]
        lines.append(f"WRR: max gamma_hat {max(gam):.4f}, reject={report.wrr['reject']}")
    if report.ci_test:
        lines.append(f"A indep S | D: chi2={report.ci_test['statistic']:.4f} "
                     f"df={report.ci_test['df']} p={report.ci_test['p_value']:.4g}")
    if report.dp_test:
        lines.append(f"demographic parity: chi2={report.dp_test['statistic']:.4f} "
                     f"p={report.dp_test['p_value']:.4g}")
    if report.cde:
        for c in report.cde:
            lines.append(f"  CDE[{c['department']}] in [{c['lower']:.4f}, {c['upper']:.4f}]")
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# simulate

def parse_generator(spec: str) -> scm.FiniteSCM:
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise scm.ModelError(f"generator parameter {item!r} is not key=value")
        params[key.strip()] = value.strip()
    try:
        if name == "example1":
            return scm.example1(float(params.get("delta", 0.5)), float(params.get("epsilon", 0.5)))
        if name == "example2":
            return scm.example2(float(params.get("epsilon", 0.25)))
        if name == "random":
            return scm.random_model(params.get("class", "cf"), int(params.get("n", 2)),
                                    int(params.get("seed", 0)), force=params.get("force"),
                                    positive=params.get("positive", "0") in ("1", "true", "yes"))
    except (TypeError, ValueError) as exc:
        raise scm.ModelError(f"bad generator parameters in {spec!r}: {exc}") from exc
    raise scm.ModelError(f"unknown generator {name!r}; use example1, example2 or random")


def run_simulate(model: scm.FiniteSCM, count: int, seed: int, records: bool = False) -> Tuple[str, scm.FairnessVerdicts]:
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    space = model.space()
    if records:
        P = scm.observational(model).probs.ravel()
        idx = rng.choice(P.size, size=count, p=P / P.sum())
        lines = [",".join(tables.HEADER)]
        for k in idx:
            s, d, a = np.unravel_index(k, (2, model.n, 2))
            lines.append(f"{space.s_labels[s]},{space.d_labels[d]},{space.a_labels[a]},1")
        text = "\n".join(lines) + "\n"
    else:
        text = scm.sample_table(model, count, rng).to_csv()
    return text, scm.classify_fairness(model)


# ---------------------------------------------------------------------------
# vertices

VERTEX_RE = re.compile(r"^(diagonal|off-diagonal)\s+\((\d+),([01])\|0\)\+\((\d+),([01])\|1\)$")


def format_vertex(p: ivcore.ExtremePoint) -> str:
    return f"{p.kind} ({p.x0},{p.y0}|0)+({p.x1},{p.y1}|1)"


def parse_vertex(line: str) -> ivcore.ExtremePoint:
    m = VERTEX_RE.match(line.strip())
    if not m:
        raise ValueError(f"not a vertex line: {line!r}")
    point = ivcore.ExtremePoint(int(m.group(2)), int(m.group(3)), int(m.group(4)), int(m.group(5)))
    if point.kind != m.group(1):
        raise ValueError(f"kind tag mismatch in {line!r}")
    return point


def run_vertices(n: int) -> List[str]:
    return [format_vertex(p) for p in ivcore.enumerate_extreme_points(n)]


# ---------------------------------------------------------------------------
# argument handling

def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{SEED_ENV} must be an integer, got {raw!r}")


def _coding(raw: Optional[str]) -> Optional[dict]:
    if raw is None:
        return None
    text = Path(raw).read_text() if Path(raw).is_file() else raw
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("coding must be a JSON object keyed by column")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causal-audit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, data=True, sampling=False):
        p.add_argument("--format", choices=("json", "text"), default="json")
        p.add_argument("--output", help="write the record here instead of stdout")
        if data:
            p.add_argument("--input", help=f"long CSV (default: bundled {BUNDLED})")
            p.add_argument("--coding", help="JSON object (or file) pinning label indices per column")
            p.add_argument("--level", type=float, default=None)
        if sampling:
            p.add_argument("--alpha", type=float, default=1.0, help="symmetric Dirichlet prior")
            p.add_argument("--samples", type=int, default=10**6)
            p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
            p.add_argument("--tolerance", type=float, default=0.0)

    p = sub.add_parser("audit", help="run every test and bound, emit a verdict")
    common(p, sampling=True)
    p.add_argument("--test-level", type=float, default=0.05)
    p.add_argument("--reject-threshold", type=float, default=0.05,
                   help="REJECTED when the upper CI limit falls below this")
    p.add_argument("--skip", action="append", default=[], choices=COMPONENTS)

    p = sub.add_parser("simulate", help="sample a dataset from a model")
    common(p, data=False)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="JSON model file")
    src.add_argument("--generator", help="e.g. example1:delta=0.25,epsilon=0.5 or random:class=cf,n=3,seed=1")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--records", action="store_true", help="one CSV row per sampled record")
    p.add_argument("--verdicts", help="write ground-truth verdicts JSON here")

    p = sub.add_parser("vertices", help="list the extreme points of the IV kernel polytope")
    common(p, data=False)
    p.add_argument("--n", type=int, required=True)

    for name, help_ in (("iv-check", "IV inequalities at the ML estimate"),
                        ("bounds", "CDE / NDE bounds at the ML estimate"),
                        ("wrr", "per-inequality one-sided association tests"),
                        ("ci-test", "stratified chi-square test of A indep S | D")):
        common(sub.add_parser(name, help=help_))

    p = sub.add_parser("bayes", help="posterior probability of the IV inequalities")
    common(p, sampling=True)

    p = sub.add_parser("sweep-prior", help="repeat the Bayesian test over symmetric priors")
    common(p, sampling=True)
    p.add_argument("--alphas", default="0.01,1,100,100000")
    return parser


def _plain(obj):
    """json fallback for numpy scalars and arrays."""
    if isinstance(obj, (np.generic, np.ndarray)):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(record, args, text: Optional[str] = None) -> None:
    if args.format == "text" and text is not None:
        out = text
    else:
        out = json.dumps(record, indent=2, default=_plain)
    if args.output:
        Path(args.output).write_text(out + "\n", encoding="utf-8")
    else:
        sys.stdout.write(out + "\n")


def _dispatch(args) -> None:
    cmd = args.command
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = _default_seed()

    if cmd == "vertices":
        lines = run_vertices(args.n)
        record = {"n": args.n, "count": len(lines), "vertices": lines}
        _emit(record, args, "\n".join(lines))
        return

    if cmd == "simulate":
        if args.model:
            model = scm.FiniteSCM.from_json(Path(args.model).read_text())
        else:
            model = parse_generator(args.generator)
        text, verdicts = run_simulate(model, args.count, seed, args.records)
        record = {"count": args.count, "seed": seed, "model": model.to_dict(), "verdicts": verdicts.to_dict()}
        if args.verdicts:
            Path(args.verdicts).write_text(json.dumps(record, indent=2, default=_plain) + "\n")
        if args.output:
            Path(args.output).write_text(text)
            sys.stdout.write(json.dumps(record["verdicts"], default=_plain) + "\n")
        else:
            sys.stdout.write(text)
            if not args.verdicts:
                sys.stderr.write(json.dumps(record["verdicts"], default=_plain) + "\n")
        return

    coding = _coding(args.coding)
    if cmd == "audit":
        config = AuditConfig(
            input=args.input, coding=coding, alpha=args.alpha, n_samples=args.samples,
            level=args.level if args.level is not None else 0.95, seed=seed,
            tolerance=args.tolerance, test_level=args.test_level,
            reject_threshold=args.reject_threshold,
            components=tuple(c for c in COMPONENTS if c not in set(args.skip)),
        )
        report = run_audit(config)
        _emit(report.to_dict(), args, format_audit_text(report))
        return

    table = load_table(args.input, coding)
    if cmd == "iv-check":
        rep = freq.ml_iv_check(table)
        _emit(rep.to_dict(), args, f"max LHS {rep.max_lhs:.6f}; satisfied={rep.satisfied}")
    elif cmd == "bounds":
        kernel = tables.kernel_from_table(table)
        record = {"cde": [dict(department=str(l), **bounds.cde_bounds(kernel, d).to_dict())
                          for d, l in enumerate(table.space.d_labels)],
                  "cde_zero_compatible": bounds.cde_zero_compatible(kernel)}
        if table.n == 2:
            record["nde_bounds"] = {k: bounds.nde_bounds_binary(kernel, k).to_dict() for k in ("0->1", "1->0")}
        text = "\n".join(f"CDE[{c['department']}] in [{c['lower']:.4f}, {c['upper']:.4f}]" for c in record["cde"])
        _emit(record, args, text)
    elif cmd == "wrr":
        rep = freq.wrr_test(table, args.level if args.level is not None else 0.05)
        text = "\n".join(f"d={c.d} a={c.a} gamma={c.gamma_hat:+.4f} p={c.association_p:.3g}" for c in rep.cells)
        _emit(rep.to_dict(), args, text + f"\nreject={rep.reject}")
    elif cmd == "ci-test":
        rep = freq.cond_indep_test(table, args.level if args.level is not None else 0.05)
        _emit(rep.to_dict(), args, f"chi2={rep.statistic:.4f} df={rep.df} p={rep.p_value:.4g}")
    elif cmd == "bayes":
        prior = bayes.DirichletSpec.symmetric(args.alpha, table.n)
        rep = bayes.posterior_model_probability(table, prior, args.samples,
                                                args.level if args.level is not None else 0.95,
                                                seed, args.tolerance)
        _emit(rep.to_dict(), args, f"N={rep.n_satisfying}/{rep.n_samples} CI=[{rep.ci[0]:.10f}, {rep.ci[1]:.10f}]")
    elif cmd == "sweep-prior":
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
        reps = bayes.prior_sweep(table, alphas, args.samples,
                                 args.level if args.level is not None else 0.95, seed, args.tolerance)
        text = "\n".join(f"alpha={r.alpha:g} N={r.n_satisfying}/{r.n_samples} lower={r.ci[0]:.10f}" for r in reps)
        _emit({"reports": [r.to_dict() for r in reps]}, args, text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except (TableError, scm.ModelError, ivcore.RealizationError, ValueError, OSError) as exc:
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        if getattr(args, "format", "json") == "json":
            sys.stdout.write(json.dumps(record) + "\n")
        else:
            sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
