"""Experiment 1: q = 0 and s = p in {0.2, 0.5, 0.7, 0.9}.

Writes one run directory per value plus ``exp1_errors.svg`` (three panels,
four curves each) and ``exp1_summary.tsv`` under ``--out``.
"""

import argparse
from pathlib import Path

from tikhonov_flow.config import load_config
from tikhonov_flow.experiments import plot_runs, run_experiment, spec_from_config

P_VALUES = (0.2, 0.5, 0.7, 0.9)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).parent.parent / "configs" / "paper_exp1.json"))
    ap.add_argument("--out", default="runs/exp1")
    args = ap.parse_args()
    base = spec_from_config(load_config(args.config))
    results = []
    for p in P_VALUES:
        spec = base.with_param("p", p).with_param("s", p)
        spec.name = f"s=p={p:g}"
        res = run_experiment(spec, out=args.out)
        results.append(res)
        r = res.report["rates"]
        print(f"{spec.name}: status={res.status} feasibility={r['feasibility']['fitted']:.3f} "
              f"obj_residual={r['obj_residual']['fitted']:.3f} (predicted {p:g}) "
              f"dist_minnorm(t_end)={res.terminal('dist_minnorm'):.3e}")
    out = Path(args.out)
    plot_runs(results, ["dist_minnorm", "obj_residual", "feasibility"], out / "exp1_errors.svg",
              title="q=0, s=p")
    lines = ["p\tstatus\tfeasibility_fitted\tobj_residual_fitted\tdist_minnorm_t_end\trun_id"]
    for p, res in zip(P_VALUES, results):
        r = res.report["rates"]
        lines.append(f"{p:g}\t{res.status}\t{r['feasibility']['fitted']:.6g}\t"
                     f"{r['obj_residual']['fitted']:.6g}\t{res.terminal('dist_minnorm'):.6g}\t{res.run_id}")
    (out / "exp1_summary.tsv").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
