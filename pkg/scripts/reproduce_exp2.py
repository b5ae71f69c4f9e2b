"""Experiment 2: the Tikhonov flow against the comparison flow, s in {0.15, 0.4, 0.65}.

For each s, writes both runs and ``contrast_s=<s>.json``: the main run's
distance to the minimum-norm pair shrinks by 100x while the comparison
run only becomes feasible.
"""

import argparse
from pathlib import Path

from tikhonov_flow.config import load_config
from tikhonov_flow.experiments import (
    min_norm_contrast, plot_runs, run_experiment, spec_from_config, write_contrast,
)

S_VALUES = (0.15, 0.4, 0.65)
CONFIGS = Path(__file__).parent.parent / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/exp2")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    main_base = spec_from_config(load_config(CONFIGS / "paper_exp2_main.json"))
    he_base = spec_from_config(load_config(CONFIGS / "paper_exp2_heode.json"))
    mains, hes = [], []
    failed = False
    for s in S_VALUES:
        m = run_experiment(main_base.with_param("s", s), out=out)
        h = run_experiment(he_base.with_param("s", s), out=out)
        m.spec.name, h.spec.name = f"main s={s:g}", f"comparison s={s:g}"
        mains.append(m)
        hes.append(h)
        con = min_norm_contrast(m, h)
        write_contrast(con, out / f"contrast_s={s:g}.json")
        failed |= con["status"] != "pass"
        print(f"s={s:g}: main dist_minnorm {con['main']['dist_minnorm_t0']:.3g} -> "
              f"{con['main']['dist_minnorm_t_end']:.3g}; comparison feasibility "
              f"{con['comparison']['feasibility_t_end']:.3g}, dist_minnorm "
              f"{con['comparison']['dist_minnorm_t_end']:.3g} [{con['status']}]")
    qs = ["dist_minnorm", "obj_residual", "feasibility"]
    plot_runs(mains, qs, out / "exp2_main.svg", title="Tikhonov flow, q=0.1, p=0.6")
    plot_runs(hes, qs, out / "exp2_comparison.svg", title="comparison flow")
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()
