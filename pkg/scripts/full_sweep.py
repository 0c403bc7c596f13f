"""Full simulation sweep: every model, mechanism and engine at S=200.

Long-running (days on one core); not part of the test suite.  Results are
appended per setting so an interrupted sweep can be resumed.

    python scripts/full_sweep.py --out sweep/ --replicates 200 --threads 8
"""
from __future__ import annotations

import argparse
from pathlib import Path

import pandas as pd

from micluster.clustering import ClustererSpec
from micluster.harness.experiment import ExperimentSpec, run_experiment, summarize_results
from micluster.harness.models import MODELS
from micluster.mechanisms import MechanismSpec

MECHANISMS = [(name, tau) for name in ("mcar", "mar1", "mar2") for tau in (0.1, 0.25, 0.4)]
ENGINES = ("jm_gl", "jm_norm", "fcs_homo", "fcs_hetero", "fcs_norm")


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("sweep"))
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--m", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for model_id, ms in MODELS.items():
        clusterer = ClustererSpec("mixture", ms.k, ms.constraint)
        for name, tau in MECHANISMS:
            for engine in ENGINES:
                path = args.out / f"{model_id}_{name}_{int(tau * 100)}_{engine}.csv"
                if path.exists():
                    continue
                spec = ExperimentSpec(ms, MechanismSpec.named(name, tau), engine, clusterer, m=args.m,
                                      replicates=args.replicates, master_seed=args.seed, n_jobs=args.threads)
                run_experiment(spec).to_csv(path, index=False)
                print(path.name, summarize_results(pd.read_csv(path)).to_string(index=False), flush=True)


if __name__ == "__main__":
    main()
