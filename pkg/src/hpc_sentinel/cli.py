"""Command-line front end.

Subcommands: extract, mutate, train, eval, rank, ablate, simulate,
report, and the end-to-end reproduce pipeline. Exit codes: 0 success,
2 usage error, 3 data error, 4 numeric divergence. Every subcommand is
deterministic given its inputs, flags and --seed; parallelism is capped
by the HPC_SENTINEL_THREADS environment variable.
"""

import argparse
import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels, hpc, mgsim, ml, mutate, pca
from .asm import CategoryMap, parse_listing
from .errors import DataError, NumericError, SentinelError


class UsageError(Exception):
    """Bad flag combination caught after argparse; maps to exit 2."""


def _load_map(path) -> CategoryMap:
    if path is None:
        return CategoryMap.default()
    return CategoryMap.from_json(Path(path).read_text(encoding="utf-8"))


def _read_text(path, stage: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"{stage}: cannot read {path}: {e}") from e


# --- extract ------------------------------------------------------------------

def cmd_extract(args) -> int:
    if args.label == "malicious" and not args.attack:
        raise UsageError("--label malicious requires --attack")
    if args.label == "benign" and args.attack:
        raise UsageError("--attack is only valid with --label malicious")
    if args.window < 1:
        raise UsageError("--window must be >= 1")
    cmap = _load_map(args.map)
    runs = []
    for f in args.files:
        text = _read_text(f, "extract")
        instrs = parse_listing(text, cmap)
        windows = hpc.extract_windows(instrs, args.window)
        runs.append((Path(f).stem, args.label,
                     args.attack if args.label == "malicious" else None,
                     windows))
    ds = hpc.emit_dataset(runs, args.out)
    print(f"wrote {args.out} ({len(ds)} windows from {len(runs)} files)")
    return 0


# --- mutate -------------------------------------------------------------------

def cmd_mutate(args) -> int:
    base = _read_text(args.base, "mutate")
    kind = mutate.AttackKind.from_name(args.attack)
    if args.template:
        template = mutate.InjectionTemplate.from_json(
            _read_text(args.template, "mutate"))
        if template.attack is not kind:
            raise DataError(f"template is for {template.attack.value}, "
                            f"--attack says {kind.value}")
    else:
        template = mutate.default_template(kind)
    mutated = mutate.inject(base, template, args.seed, _load_map(args.map))
    Path(args.out).write_text(mutated, encoding="utf-8")
    print(f"wrote {args.out} ({kind.value}, +{len(template.payload)} "
          f"instructions)")
    return 0


# --- train / eval -------------------------------------------------------------

def _train_one(model: str, train_ds, seed: int, args):
    if model == "dt":
        return ml.train_dt(train_ds)
    if model == "rf":
        return ml.train_rf(train_ds, n_trees=args.trees, seed=seed)
    if model == "nn":
        return ml.train_nn(train_ds, hidden=args.hidden,
                           epochs=args.epochs, lr=args.lr, seed=seed)
    raise DataError(f"unknown model {model!r}")


def cmd_train(args) -> int:
    ds = hpc.Dataset.from_csv(args.data)
    train_ds, _ = ml.split(ds, ml.SplitSpec(train_fraction=args.split,
                                            seed=args.seed))
    if args.balance:
        train_ds = ml.balance(train_ds, seed=args.seed)
    model = _train_one(args.model, train_ds, args.seed, args)
    ml.save_model(model, args.out)
    print(f"wrote {args.out} ({args.model}, {len(train_ds)} training "
          f"samples)")
    return 0


def cmd_eval(args) -> int:
    model = ml.load_model(Path(args.model))
    ds = hpc.Dataset.from_csv(args.data)
    if tuple(model.feature_names) != tuple(ds.feature_names):
        ds = ds.project(model.feature_names)
    report = ml.evaluate(model, ds)
    Path(args.out).write_text(json.dumps(report.as_dict(), indent=2) + "\n",
                              encoding="utf-8")
    m = report.metrics
    print(f"wrote {args.out} (accuracy {m.accuracy:.4f}, "
          f"precision {m.precision:.4f}, recall {m.recall:.4f})")
    return 0


# --- rank / ablate ------------------------------------------------------------

def cmd_rank(args) -> int:
    ds = hpc.Dataset.from_csv(args.data)
    ranking = pca.rank_features(ds, n_components=args.components)
    Path(args.out).write_text(ranking.to_json(), encoding="utf-8")
    top = ", ".join(ranking.top(3))
    print(f"wrote {args.out} (top features: {top})")
    return 0


def cmd_ablate(args) -> int:
    ds = hpc.Dataset.from_csv(args.data)
    if args.exclusions == "all":
        specs = pca.all_specs()
    elif args.exclusions == "1":
        specs = [pca.eliminate((c,)) for c in pca.CLASS_ORDER]
    else:
        import itertools
        specs = [pca.eliminate(p)
                 for p in itertools.combinations(pca.CLASS_ORDER, 2)]
    report = pca.run_ablation(ds, specs=specs, seed=args.seed,
                              balanced=args.balanced)
    report.to_csv(args.out)
    print(f"wrote {args.out} ({len(report.rows)} rows)")
    return 0


# --- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    if args.scenario_file:
        scenario = mgsim.Scenario.from_json(
            _read_text(args.scenario_file, "simulate"))
    else:
        scenario = mgsim.named_scenario(args.scenario)
    if args.pno_variant:
        scenario.pno_variant = args.pno_variant
    states = mgsim.run_scenario(scenario, args.out)
    mean_pv = sum(s.pv_kw for s in states) / len(states)
    print(f"wrote {args.out} ({len(states)} steps, mean pv "
          f"{mean_pv:.1f} kW)")
    return 0


# --- report (SVG charts from bundle CSVs) --------------------------------------

def _read_sim_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {name: [float(r[i]) for r in rows[1:]]
            for i, name in enumerate(header[:-2])}
    return cols


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _svg_chart(t, series, title, ylabel, out_path, width=860, height=360):
    """Minimal SVG polyline chart; downsamples long traces."""
    pad_l, pad_r, pad_t, pad_b = 56, 16, 28, 36
    iw, ih = width - pad_l - pad_r, height - pad_t - pad_b
    step = max(1, len(t) // 600)
    t = t[::step]
    series = {k: v[::step] for k, v in series.items()}
    lo = min(min(v) for v in series.values())
    hi = max(max(v) for v in series.values())
    if hi == lo:
        hi = lo + 1.0
    sx = iw / (t[-1] - t[0]) if t[-1] > t[0] else 1.0
    sy = ih / (hi - lo)

    def px(x):
        return pad_l + (x - t[0]) * sx

    def py(y):
        return pad_t + ih - (y - lo) * sy

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{title}</text>']
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yv = lo + frac * (hi - lo)
        yp = py(yv)
        parts.append(f'<line x1="{pad_l}" y1="{yp:.1f}" '
                     f'x2="{width - pad_r}" y2="{yp:.1f}" '
                     f'stroke="#ddd" stroke-width="1"/>')
        parts.append(f'<text x="{pad_l - 6}" y="{yp + 4:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{yv:.2f}</text>')
        xv = t[0] + frac * (t[-1] - t[0])
        xp = px(xv)
        parts.append(f'<text x="{xp:.1f}" y="{height - 14}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{xv:.0f}</text>')
    for i, (name, vals) in enumerate(series.items()):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}"
                       for x, y in zip(t, vals))
        parts.append(f'<polyline points="{pts}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        lx = pad_l + 10 + i * 150
        parts.append(f'<line x1="{lx}" y1="{height - 6}" x2="{lx + 18}" '
                     f'y2="{height - 6}" stroke="{color}" '
                     f'stroke-width="2"/>')
        parts.append(f'<text x="{lx + 22}" y="{height - 2}" '
                     f'font-family="sans-serif" font-size="10">'
                     f'{name}</text>')
    parts.append(f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11" '
                 f'transform="rotate(-90 14 {height / 2:.0f})">'
                 f'{ylabel}</text>')
    parts.append("</svg>")
    Path(out_path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def cmd_report(args) -> int:
    bundle = Path(args.bundle)
    sims = sorted(bundle.glob("sim_*.csv"))
    if not sims:
        raise DataError(f"report: no sim_*.csv files under {bundle}")
    out_dir = Path(args.out) if args.out else bundle / "plots"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for sim in sims:
        cols = _read_sim_csv(sim)
        name = sim.stem.removeprefix("sim_")
        _svg_chart(cols["time_s"],
                   {"pv": cols["pv_kw"], "diesel": cols["diesel_kw"],
                    "ess": cols["ess_kw"], "load": cols["load_kw"]},
                   f"{name}: dispatch", "power (kW)",
                   out_dir / f"{name}_power.svg")
        _svg_chart(cols["time_s"], {"frequency": cols["freq_hz"]},
                   f"{name}: grid frequency", "Hz",
                   out_dir / f"{name}_freq.svg")
        written += 2
    print(f"wrote {written} charts to {out_dir}")
    return 0


# --- reproduce ----------------------------------------------------------------

BUNDLE_ASM = ("benign.asm", "mppt_dos.asm", "inverter_dos.asm",
              "input_array.asm", "input_sine.asm")
BUNDLE_MODELS = ("dt_unbalanced.json", "rf_unbalanced.json",
                 "nn_unbalanced.json", "dt_balanced.json",
                 "rf_balanced.json", "nn_balanced.json")
BUNDLE_SIMS = tuple(f"sim_{n}.csv" for n in mgsim.SCENARIO_NAMES)
BUNDLE_FILES = (BUNDLE_ASM + ("dataset.csv",) + BUNDLE_MODELS
                + ("ranking.json", "ablation.csv") + BUNDLE_SIMS
                + ("summary.md",))


def _derived_seed(*key) -> int:
    return int(np.random.SeedSequence(key).generate_state(1)[0])


def _metrics_table(rows) -> list:
    out = ["| model | accuracy | precision | recall | fp rate | fn rate |",
           "|---|---|---|---|---|---|"]
    for name, m in rows:
        out.append(f"| {name} | {m.accuracy:.4f} | {m.precision:.4f} "
                   f"| {m.recall:.4f} | {m.fp_rate:.4f} | {m.fn_rate:.4f} |")
    return out


def _ablation_table(rows) -> list:
    out = ["| subset | excluded | model | features | accuracy "
           "| precision | recall |",
           "|---|---|---|---|---|---|---|"]
    for r in rows:
        m = r.metrics
        out.append(f"| {r.spec_name} | {''.join(r.excluded)} | {r.model} "
                   f"| {r.n_features} | {m.accuracy:.4f} "
                   f"| {m.precision:.4f} | {m.recall:.4f} |")
    return out


def _train_eval_all(ds, seed, balanced: bool, train_fraction: float = 0.7):
    """Split, optional training-side balancing, all three models."""
    results = {}
    for i, name in enumerate(("dt", "rf", "nn")):
        s = _derived_seed(seed, 1 if balanced else 0, i)
        tr, te = ml.split(ds, ml.SplitSpec(train_fraction=train_fraction,
                                           seed=s))
        if balanced:
            tr = ml.balance(tr, seed=s)
        if name == "dt":
            model = ml.train_dt(tr)
        elif name == "rf":
            model = ml.train_rf(tr, seed=s)
        else:
            model = ml.train_nn(tr, seed=s)
        results[name] = (model, ml.evaluate(model, te))
    return results


def cmd_reproduce(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed
    cmap = _load_map(args.map)

    def stage(name):
        print(f"[reproduce] {name}")

    # corpus
    stage("mutate")
    try:
        if args.base:
            base = _read_text(args.base, "mutate")
        else:
            base = mutate.synth_base_listing(seed=seed)
        corpus = mutate.build_corpus(base, seed=seed)
    except SentinelError as e:
        raise DataError(f"stage mutate: {e}") from e
    ids = ["benign"] + [k.value for k in mutate.AttackKind]
    for fid, fname in zip(ids, BUNDLE_ASM):
        (out / fname).write_text(corpus[fid], encoding="utf-8")

    stage("extract")
    runs = []
    for fid in ids:
        instrs = parse_listing(corpus[fid], cmap)
        windows = hpc.extract_windows(instrs, args.window)
        label = "benign" if fid == "benign" else "malicious"
        runs.append((fid, label, None if fid == "benign" else fid, windows))
    ds = hpc.emit_dataset(runs, out / "dataset.csv")

    stage("train")
    unbal = _train_eval_all(ds, seed, balanced=False,
                            train_fraction=args.split)
    bal = _train_eval_all(ds, seed, balanced=True,
                          train_fraction=args.split)
    for name in ("dt", "rf", "nn"):
        ml.save_model(unbal[name][0], out / f"{name}_unbalanced.json")
        ml.save_model(bal[name][0], out / f"{name}_balanced.json")

    stage("rank")
    ranking = pca.rank_features(ds, n_components=args.components)
    (out / "ranking.json").write_text(ranking.to_json(), encoding="utf-8")
    top3 = ranking.top(3)
    top_ds = ds.project(top3)
    top_unbal = _train_eval_all(top_ds, _derived_seed(seed, 3, 0),
                                balanced=False, train_fraction=args.split)
    top_bal = _train_eval_all(top_ds, _derived_seed(seed, 3, 1),
                              balanced=True, train_fraction=args.split)

    stage("ablate")
    ablation = pca.run_ablation(ds, seed=seed)
    ablation.to_csv(out / "ablation.csv")

    stage("simulate")
    sim_stats = []
    for name, fname in zip(mgsim.SCENARIO_NAMES, BUNDLE_SIMS):
        states = mgsim.run_scenario(mgsim.named_scenario(name), out / fname)
        pv = [s.pv_kw for s in states]
        fr = [s.freq_hz for s in states]
        sim_stats.append((name, sum(pv) / len(pv), min(fr), max(fr),
                          states[-1].ess_kwh))

    stage("summary")
    n0, n1 = ds.class_counts()
    lines = [
        "# Firmware-counter detection and microgrid impact study", "",
        f"Seed {seed}; kernel backend `{_kernels.backend()}`.",
        f"Corpus: {len(ids)} firmware listings, {len(ds)} windows of "
        f"{args.window} instructions ({n0} benign / {n1} malicious), "
        f"{len(ds.feature_names)} counters.", "",
        "## Detection metrics, unbalanced training (70/30 split)", "",
    ]
    lines += _metrics_table([(k, v[1].metrics) for k, v in unbal.items()])
    lines += ["", "## Detection metrics, balanced training", ""]
    lines += _metrics_table([(k, v[1].metrics) for k, v in bal.items()])
    lines += ["", "## False-positive / false-negative shares of the "
                  "test set", "",
              "| model | training | fp rate | fn rate |",
              "|---|---|---|---|"]
    for label, group in (("unbalanced", unbal), ("balanced", bal)):
        for k, (_, rep) in group.items():
            m = rep.metrics
            lines.append(f"| {k} | {label} | {m.fp_rate:.4f} "
                         f"| {m.fn_rate:.4f} |")
    lines += ["", f"## Top-{args.components} counter ranking", "",
              "| rank | counter | score |", "|---|---|---|"]
    for i, (name, score) in enumerate(ranking.ranked[:args.components], 1):
        lines.append(f"| {i} | {name} | {score:.4f} |")
    lines += ["", f"Models retrained on the top {len(top3)} counters "
                  f"({', '.join(top3)}), unbalanced:", ""]
    lines += _metrics_table([(k, v[1].metrics)
                             for k, v in top_unbal.items()])
    lines += ["", "Same counters, balanced:", ""]
    lines += _metrics_table([(k, v[1].metrics) for k, v in top_bal.items()])
    singles = [r for r in ablation.rows if len(r.excluded) == 1]
    doubles = [r for r in ablation.rows if len(r.excluded) == 2]
    lines += ["", "## Instruction-class elimination", "",
              "### One class removed", ""]
    lines += _ablation_table(singles)
    lines += ["", "### Two classes removed", ""]
    lines += _ablation_table(doubles)
    lines += ["", "## Simulation scenarios", "",
              "| scenario | mean pv (kW) | min freq (Hz) | max freq (Hz) "
              "| final ess (kWh) |", "|---|---|---|---|---|"]
    for name, mean_pv, fmin, fmax, e_end in sim_stats:
        lines.append(f"| {name} | {mean_pv:.2f} | {fmin:.4f} "
                     f"| {fmax:.4f} | {e_end:.3f} |")
    (out / "summary.md").write_text("\n".join(lines) + "\n",
                                    encoding="utf-8")

    validate_bundle(out, seed=seed)
    print(f"bundle complete: {out} ({len(BUNDLE_FILES)} files)")
    return 0


def bundle_manifest(bundle_dir, seed: int) -> dict:
    bundle = Path(bundle_dir)
    files = {}
    for name in sorted(p.name for p in bundle.iterdir() if p.is_file()):
        files[name] = {"bytes": (bundle / name).stat().st_size}

    def rows(name):
        with open(bundle / name, newline="", encoding="utf-8") as fh:
            return sum(1 for _ in fh) - 1

    return {"seed": seed, "files": files,
            "dataset_rows": rows("dataset.csv"),
            "ablation_rows": rows("ablation.csv"),
            "sim_rows": {n: rows(f"sim_{n}.csv")
                         for n in mgsim.SCENARIO_NAMES}}


def validate_bundle(bundle_dir, seed: int = 0):
    """Check a reproduce bundle against the shipped JSON-schema manifest."""
    import jsonschema

    schema = json.loads((resources.files("hpc_sentinel") / "data"
                         / "bundle_schema.json").read_text(encoding="utf-8"))
    manifest = bundle_manifest(bundle_dir, seed)
    try:
        jsonschema.validate(manifest, schema)
    except jsonschema.ValidationError as e:
        raise DataError(f"bundle {bundle_dir} fails its manifest schema: "
                        f"{e.message}") from e
    return manifest


# --- parser and entry point -----------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hpc-sentinel",
        description="Instruction-counter firmware screening and islanded "
                    "microgrid attack simulation.")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("extract", help="counter windows from listings")
    q.add_argument("files", nargs="+", metavar="listing.asm")
    q.add_argument("--map", help="category map JSON (default: built-in)")
    q.add_argument("--window", type=int, default=hpc.DEFAULT_WINDOW)
    q.add_argument("--label", choices=("benign", "malicious"),
                   required=True)
    q.add_argument("--attack", choices=[k.value for k in mutate.AttackKind])
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_extract)

    q = sub.add_parser("mutate", help="inject an attack payload")
    q.add_argument("--base", required=True)
    q.add_argument("--attack", required=True,
                   choices=[k.value for k in mutate.AttackKind])
    q.add_argument("--template", help="custom template JSON")
    q.add_argument("--map", help="category map JSON (default: built-in)")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_mutate)

    q = sub.add_parser("train", help="fit a classifier on a dataset CSV")
    q.add_argument("--model", choices=("dt", "rf", "nn"), required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--split", type=float, default=0.7)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--balance", action="store_true")
    q.add_argument("--trees", type=int, default=100)
    q.add_argument("--hidden", type=int, default=16)
    q.add_argument("--epochs", type=int, default=600)
    q.add_argument("--lr", type=float, default=0.5)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_train)

    q = sub.add_parser("eval", help="score a model on a dataset CSV")
    q.add_argument("--model", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_eval)

    q = sub.add_parser("rank", help="rank counters by component loadings")
    q.add_argument("--data", required=True)
    q.add_argument("--components", type=int, default=3)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_rank)

    q = sub.add_parser("ablate", help="class-elimination study")
    q.add_argument("--data", required=True)
    q.add_argument("--exclusions", choices=("1", "2", "all"),
                   default="all")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--balanced", action="store_true")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_ablate)

    q = sub.add_parser("simulate", help="run a microgrid scenario")
    g = q.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario", choices=mgsim.SCENARIO_NAMES)
    g.add_argument("--scenario-file")
    q.add_argument("--pno-variant", choices=("literal", "symmetric"))
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("report", help="render SVG charts for a bundle")
    q.add_argument("--bundle", required=True)
    q.add_argument("--out", help="chart directory (default: bundle/plots)")
    q.set_defaults(func=cmd_report)

    q = sub.add_parser("reproduce", help="full pipeline into one bundle")
    q.add_argument("--seed", type=int, default=42)
    q.add_argument("--out", required=True)
    q.add_argument("--base", help="base listing (default: synthesized)")
    q.add_argument("--map", help="category map JSON (default: built-in)")
    q.add_argument("--window", type=int, default=hpc.DEFAULT_WINDOW)
    q.add_argument("--split", type=float, default=0.7)
    q.add_argument("--components", type=int, default=3)
    q.set_defaults(func=cmd_reproduce)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (DataError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except SentinelError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ValueError, TypeError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
