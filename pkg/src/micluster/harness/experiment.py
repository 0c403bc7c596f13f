"""Simulation pipeline: generate, mask, impute, cluster, pool, score.

Every stage of replicate ``r`` draws from ``derive(master_seed, r, stage)``,
so a replicate's results do not depend on which other replicates run.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .. import rand
from ..clustering import ClustererSpec, fit_clusterer
from ..exceptions import ChainFailure, InvalidParameterError, ParseError
from ..impute import (
    ChainSpec,
    ImputationResult,
    fcs_hetero_impute,
    fcs_homo_impute,
    fcs_norm_impute,
    jm_gl_impute,
)
from ..mechanisms import Dataset, MechanismSpec, ampute
from ..pooling import analyse_copies, ari, pool
from .io import load_csv
from .models import SimModelSpec, generate_model, model_spec

logger = logging.getLogger(__name__)

__all__ = [
    "ENGINES",
    "impute",
    "ExperimentSpec",
    "run_replicate",
    "run_experiment",
    "Summary",
    "summarize",
    "summarize_results",
    "parse_config",
    "load_config",
    "RESULT_COLUMNS",
]

ENGINES = ("jm_gl", "jm_norm", "fcs_homo", "fcs_hetero", "fcs_norm", "external")

# default chain lengths per engine: (burn_in, thin) for JM, sweeps for FCS
JM_DEFAULTS = {"jm_gl": (100, 20), "jm_norm": (500, 100)}
FCS_DEFAULTS = {"fcs_homo": 200, "fcs_hetero": 200, "fcs_norm": 20}

RESULT_COLUMNS = [
    "replicate",
    "engine",
    "mechanism",
    "tau",
    "clusterer",
    "k",
    "ari",
    "ari_si",
    "total_instability",
    "status",
]

# stage keys for seed derivation
_GENERATE, _MASK, _IMPUTE, _CLUSTER, _POOL = range(5)


def load_external(directory, m: int | None = None, na_token: str = "NA") -> ImputationResult:
    """Completed datasets stored as CSV files in ``directory`` (name order)."""
    files = sorted(Path(directory).glob("*.csv"))
    if not files:
        raise ParseError(f"{directory}: no CSV files")
    if m is not None:
        if len(files) < m:
            raise ParseError(f"{directory}: {len(files)} files, {m} imputations requested")
        files = files[:m]
    completed = []
    for f in files:
        d = load_csv(f, na_token)
        if not d.is_complete:
            raise ParseError(f"{f}: imputed dataset still has missing cells")
        completed.append(d.values)
    if len({c.shape for c in completed}) != 1:
        raise ParseError(f"{directory}: imputed datasets differ in shape")
    return ImputationResult(completed, [], "external")


def impute(engine: str, data, k: int, m: int, rng, *, l=None, burn_in=None, thin=None, pred=None,
           external_dir=None) -> ImputationResult:
    """Dispatch to one engine with its default chain settings."""
    if engine in JM_DEFAULTS:
        b0, t0 = JM_DEFAULTS[engine]
        kk = k if engine == "jm_gl" else 1
        spec = ChainSpec(m, b0 if burn_in is None else burn_in, t0 if thin is None else thin, kk)
        res = jm_gl_impute(data, spec, rng)
        res.engine = engine
        return res
    if engine in FCS_DEFAULTS:
        sweeps = FCS_DEFAULTS[engine] if l is None else l
        if engine == "fcs_norm":
            return fcs_norm_impute(data, sweeps, m, pred, rng)
        fn = fcs_homo_impute if engine == "fcs_homo" else fcs_hetero_impute
        return fn(data, k, sweeps, m, pred, rng)
    if engine == "external":
        if external_dir is None:
            raise InvalidParameterError("the external engine needs a directory of imputed CSVs")
        res = load_external(external_dir, m)
        X = data.values if isinstance(data, Dataset) else np.asarray(data, dtype=float)
        mask = data.mask if isinstance(data, Dataset) else ~np.isnan(X)
        for c in res.completed:
            if c.shape != X.shape or not np.array_equal(c[mask], X[mask]):
                raise ParseError(f"{external_dir}: imputed data do not match the observed cells")
        return res
    raise InvalidParameterError(f"unknown engine {engine!r}; expected one of {ENGINES}")


@dataclass(frozen=True)
class ExperimentSpec:
    """One cell of a simulation study.

    ``mechanism`` None runs the full-data control (no masking, no
    imputation).  ``instability_rounds`` 0 skips the bootstrap instability.
    ``imputation_k`` defaults to the model's cluster count.
    """

    model: SimModelSpec
    mechanism: MechanismSpec | None
    engine: str
    clusterer: ClustererSpec
    m: int = 20
    replicates: int = 30
    master_seed: int = 0
    l: int | None = None
    burn_in: int | None = None
    thin: int | None = None
    imputation_k: int | None = None
    instability_rounds: int = 0
    external_dir: str | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidParameterError("replicates must be >= 1")
        if self.m < 1:
            raise InvalidParameterError("m must be >= 1")
        if self.engine not in ENGINES:
            raise InvalidParameterError(f"unknown engine {self.engine!r}")

    @property
    def tau(self) -> float:
        return 0.0 if self.mechanism is None else self.mechanism.tau

    @property
    def mechanism_label(self) -> str:
        return "none" if self.mechanism is None else self.mechanism.label


def run_replicate(spec: ExperimentSpec, r: int) -> dict:
    seed = spec.master_seed
    data = generate_model(spec.model, rand.derive(seed, r, _GENERATE))
    truth = data.ref_labels
    data = data.without_labels()
    row = {
        "replicate": r,
        "engine": spec.engine if spec.mechanism is not None else "full",
        "mechanism": spec.mechanism_label,
        "tau": spec.tau,
        "clusterer": spec.clusterer.method,
        "k": spec.clusterer.k,
        "ari": np.nan,
        "ari_si": np.nan,
        "total_instability": np.nan,
        "status": "ok",
    }
    if spec.mechanism is None:
        fitted = fit_clusterer(data.values, spec.clusterer, rand.derive(seed, r, _CLUSTER))
        row["ari"] = row["ari_si"] = ari(fitted.partition, truth)
        return row
    data = ampute(data, spec.mechanism, rand.derive(seed, r, _MASK))
    k_imp = spec.model.k if spec.imputation_k is None else spec.imputation_k
    ext = None if spec.external_dir is None else str(Path(spec.external_dir) / str(r))
    try:
        result = impute(spec.engine, data, k_imp, spec.m, rand.derive(seed, r, _IMPUTE), l=spec.l,
                        burn_in=spec.burn_in, thin=spec.thin, external_dir=ext)
    except ChainFailure as exc:
        logger.info("replicate %d: chain failure: %s", r, exc)
        row["status"] = "chain_failure"
        return row
    parts, inst = analyse_copies(result.completed, spec.clusterer, rand.derive(seed, r, _CLUSTER),
                                 spec.instability_rounds)
    pooled = pool(parts, spec.clusterer.k, rand.derive(seed, r, _POOL),
                  inst if spec.instability_rounds > 0 else None)
    row["ari"] = ari(pooled.partition, truth)
    # single imputation: the first copy on its own (its chain is that of an m = 1 run)
    row["ari_si"] = ari(parts[0], truth)
    if pooled.total_instability is not None:
        row["total_instability"] = pooled.total_instability
    return row


def run_experiment(spec: ExperimentSpec, replicates=None) -> pd.DataFrame:
    """Results table, one row per replicate, sorted by replicate index.

    ``replicates`` restricts the run to a subset of indices.
    """
    reps = list(range(spec.replicates)) if replicates is None else sorted(int(r) for r in replicates)
    if spec.n_jobs != 1 and len(reps) > 1:
        from joblib import Parallel, delayed

        rows = Parallel(n_jobs=spec.n_jobs)(delayed(run_replicate)(spec, r) for r in reps)
    else:
        rows = [run_replicate(spec, r) for r in reps]
    df = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    return df.sort_values("replicate", kind="stable").reset_index(drop=True)


@dataclass(frozen=True)
class Summary:
    count: int
    median: float
    iqr: float


def summarize(values) -> Summary:
    """Count, median and interquartile range (linear-interpolation quartiles)."""
    v = np.asarray(values, dtype=float).ravel()
    v = v[~np.isnan(v)]
    if v.size == 0:
        raise InvalidParameterError("cannot summarize an empty vector")
    q1, q3 = np.percentile(v, [25, 75], method="linear")
    return Summary(int(v.size), float(np.median(v)), float(q3 - q1))


def summarize_results(df: pd.DataFrame) -> pd.DataFrame:
    """Per-cell successful count ``S``, median and IQR of MI and SI ARI."""
    keys = ["engine", "mechanism", "tau", "clusterer", "k"]
    out = []
    for key, grp in df.groupby(keys, sort=True):
        ok = grp[grp["status"] == "ok"]
        rec = dict(zip(keys, key))
        rec["S"] = len(ok)
        for col in ("ari", "ari_si", "total_instability"):
            vals = ok[col].dropna()
            if len(vals):
                s = summarize(vals)
                rec[f"{col}_median"], rec[f"{col}_iqr"] = s.median, s.iqr
            else:
                rec[f"{col}_median"] = rec[f"{col}_iqr"] = np.nan
        out.append(rec)
    return pd.DataFrame(out)


def write_table(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, float_format="%.17g", na_rep="NA")


# --------------------------------------------------------------------------
# configuration files

_INT_KEYS = {"k", "m", "l", "burn_in", "thin", "replicates", "seed", "instability_rounds", "n_jobs", "imputation_k",
             "driver_col"}
_FLOAT_KEYS = {"tau"}
_STR_KEYS = {"model", "mechanism", "engine", "clusterer", "constraint", "standardize", "results", "summary",
             "external_dir"}
CONFIG_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def parse_config(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys may not repeat."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}: line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ParseError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in out:
            raise ParseError(f"{source}: line {lineno}: duplicate key {key!r}")
        if not value:
            raise ParseError(f"{source}: line {lineno}: empty value for {key!r}")
        try:
            if key in _INT_KEYS:
                out[key] = int(value)
            elif key in _FLOAT_KEYS:
                out[key] = float(value)
            else:
                out[key] = value
        except ValueError:
            raise ParseError(f"{source}: line {lineno}: bad value {value!r} for {key!r}") from None
    return out


def spec_from_config(cfg: dict) -> ExperimentSpec:
    """Build an :class:`ExperimentSpec`; unset keys take the documented defaults."""
    try:
        model = model_spec(cfg.get("model", "I"))
        tau = cfg.get("tau", 0.25)
        mech_name = cfg.get("mechanism", "mcar")
        mechanism = None if tau == 0 or mech_name == "none" else MechanismSpec.named(mech_name, tau, cfg.get("driver_col"))
        method = cfg.get("clusterer", "mixture")
        std = cfg.get("standardize")
        if std is not None:
            if std.lower() not in ("true", "false"):
                raise ParseError(f"standardize must be true or false, got {std!r}")
            std = std.lower() == "true"
        clusterer = ClustererSpec(method, cfg.get("k", model.k), cfg.get("constraint", model.constraint), std)
        return ExperimentSpec(
            model=model,
            mechanism=mechanism,
            engine=cfg.get("engine", "jm_gl"),
            clusterer=clusterer,
            m=cfg.get("m", 20),
            replicates=cfg.get("replicates", 30),
            master_seed=cfg.get("seed", 0),
            l=cfg.get("l"),
            burn_in=cfg.get("burn_in"),
            thin=cfg.get("thin"),
            imputation_k=cfg.get("imputation_k"),
            instability_rounds=cfg.get("instability_rounds", 0),
            external_dir=cfg.get("external_dir"),
            n_jobs=cfg.get("n_jobs", 1),
        )
    except InvalidParameterError as exc:
        raise ParseError(str(exc)) from exc


def load_config(path) -> tuple[ExperimentSpec, dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    cfg = parse_config(text, str(path))
    return spec_from_config(cfg), cfg


def replace_spec(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    return replace(spec, **changes)
