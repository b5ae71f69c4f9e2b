"""Experiment 3: q in {0, 0.1} with (p, s) paired as (0.2, -0.35), (0.4, 0.35), (0.6, 0.55), (0.8, 0.85).

One figure per q value (three panels, four curves) and a summary table.
The parameter grid is run in parallel with ``--workers``.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from tikhonov_flow.dynamics import ParameterSet
from tikhonov_flow.experiments import ExperimentSpec, plot_runs, run_experiment

PAIRS = ((0.2, -0.35), (0.4, 0.35), (0.6, 0.55), (0.8, 0.85))
Q_VALUES = (0.0, 0.1)


def _run(args):
    spec, out = args
    return run_experiment(spec, out=out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/exp3")
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()
    specs = [ExperimentSpec(params=ParameterSet(p=p, q=q, s=s), name=f"q={q:g} p={p:g} s={s:g}")
             for q in Q_VALUES for p, s in PAIRS]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(_run, [(s, args.out) for s in specs]))
    out = Path(args.out)
    lines = ["q\tp\ts\tregimes\tstatus\tfeasibility_fitted\tfeasibility_predicted\tdist_minnorm_t_end"]
    for res in results:
        prm, rate = res.spec.params, res.report["rates"]["feasibility"]
        pred = "" if rate["predicted"] is None else f"{rate['predicted']:.4g}"
        lines.append(f"{prm.q:g}\t{prm.p:g}\t{prm.s:g}\t{'+'.join(res.report['regimes'])}\t"
                     f"{res.status}\t{rate['fitted']:.4g}\t{pred}\t{res.terminal('dist_minnorm'):.4g}")
    text = "\n".join(lines) + "\n"
    (out / "exp3_summary.tsv").write_text(text)
    print(text, end="")
    for q in Q_VALUES:
        group = [r for r in results if r.spec.params.q == q]
        plot_runs(group, ["dist_minnorm", "obj_residual", "feasibility"], out / f"exp3_q={q:g}.svg",
                  title=f"q={q:g}")


if __name__ == "__main__":
    main()
