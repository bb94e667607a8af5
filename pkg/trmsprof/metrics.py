"""
Profile aggregation, evaluation metrics, curve fitting and report datasets
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import curve_fit

from trmsprof.config import FIT_MODELS
from trmsprof.errors import InsufficientPoints
from trmsprof.store import ROOT_NAME, ROOT_ROUTINE, ProfileStore

log = logging.getLogger(__name__)

POINT_COLUMNS = ['size', 'max_cost', 'count', 'sum_cost']


# ============================================================================
# ROUTINE PROFILES
# ============================================================================

@dataclass
class RoutineProfile:
    """
    Input-sensitive profile of one routine (one thread, or all merged)

    trms_points / rms_points hold one row per distinct size value with the
    worst-case cost, activation count and total cost observed at that size.
    """

    rtn: int
    tid: Optional[int]
    name: str
    activations: int
    trms_points: pd.DataFrame
    rms_points: pd.DataFrame
    total_trms: int = 0
    total_rms: int = 0
    induced_thread: int = 0
    induced_external: int = 0
    self_induced_thread: int = 0
    self_induced_external: int = 0

    def points(self, metric: str) -> pd.DataFrame:
        return self.trms_points if metric == 'trms' else self.rms_points


def routine_name(rtn: int, names: Mapping[int, str]) -> str:
    if rtn == ROOT_ROUTINE:
        return ROOT_NAME
    return names.get(rtn, f"rtn{rtn}")


def _size_points(frame: pd.DataFrame, metric: str) -> pd.DataFrame:
    points = (
        frame.groupby(metric)['cost']
        .agg(max_cost='max', count='count', sum_cost='sum')
        .reset_index()
        .rename(columns={metric: 'size'})
        .sort_values('size')
        .reset_index(drop=True)
    )
    return points[POINT_COLUMNS].astype('int64')


def build_profiles(store: ProfileStore, merge_threads: bool = True,
                   names: Optional[Mapping[int, str]] = None) -> List[RoutineProfile]:
    """
    Group tuples into routine profiles

    Args:
        store: Profile tuples
        merge_threads: One profile per routine across threads; otherwise one
            per (routine, thread)
        names: Routine id -> name

    Returns:
        Profiles ordered by routine id, then thread id
    """
    names = names or {}
    frame = store.to_frame()
    if frame.empty:
        return []

    keys = ['rtn'] if merge_threads else ['rtn', 'tid']
    profiles = []
    for key, group in frame.groupby(keys, sort=True):
        key = key if isinstance(key, tuple) else (key,)
        rtn = int(key[0])
        tid = None if merge_threads else int(key[1])
        profiles.append(RoutineProfile(
            rtn=rtn, tid=tid, name=routine_name(rtn, names),
            activations=len(group),
            trms_points=_size_points(group, 'trms'),
            rms_points=_size_points(group, 'rms'),
            total_trms=int(group['trms'].sum()),
            total_rms=int(group['rms'].sum()),
            induced_thread=int(group['induced_thread'].sum()),
            induced_external=int(group['induced_external'].sum()),
            self_induced_thread=int(group['self_induced_thread'].sum()),
            self_induced_external=int(group['self_induced_external'].sum()),
        ))
    return profiles


# ============================================================================
# METRICS
# ============================================================================

def profile_richness(profile: RoutineProfile) -> float:
    """(|distinct TRMS| - |distinct RMS|) / |distinct RMS|; negative when TRMS collapses points"""
    distinct_rms = len(profile.rms_points)
    assert distinct_rms >= 1, f"routine {profile.rtn} has no activations"
    return (len(profile.trms_points) - distinct_rms) / distinct_rms


def input_volume(source: Union[ProfileStore, RoutineProfile]) -> float:
    """1 - sum(RMS) / sum(TRMS), or 0 when sum(TRMS) is 0"""
    if isinstance(source, RoutineProfile):
        total_trms, total_rms = source.total_trms, source.total_rms
    else:
        total_trms = sum(t.trms for t in source)
        total_rms = sum(t.rms for t in source)
    if total_trms == 0:
        return 0.0
    return 1.0 - total_rms / total_trms


def _percentages(thread: int, external: int) -> Tuple[float, float]:
    total = thread + external
    if total == 0:
        return (0.0, 0.0)
    return (100.0 * thread / total, 100.0 * external / total)


def induced_breakdown(source: Union[ProfileStore, RoutineProfile]) -> Tuple[float, float]:
    """
    Share of induced first-accesses due to other threads vs external input

    A store is summarised globally from self counters, so each induced
    access counts once. A routine profile uses inclusive counters, so the
    induced accesses of its callees count toward it.

    Returns:
        (thread_pct, external_pct), summing to 100, or (0, 0)
    """
    if isinstance(source, RoutineProfile):
        return _percentages(source.induced_thread, source.induced_external)
    thread = sum(t.self_induced_thread for t in source)
    external = sum(t.self_induced_external for t in source)
    return _percentages(thread, external)


def distribution_curve(values: Iterable[float]) -> pd.DataFrame:
    """
    Points (x_pct, y): x percent of routines have a metric value >= y
    """
    ordered = sorted(values, reverse=True)
    n = len(ordered)
    return pd.DataFrame({
        'x_pct': [100.0 * (k + 1) / n for k in range(n)],
        'y': [float(v) for v in ordered],
    })


def thread_external_table(profiles: Sequence[RoutineProfile]) -> pd.DataFrame:
    """Per-routine induced split, sorted by decreasing thread-induced percentage"""
    rows = []
    for p in profiles:
        thread_pct, external_pct = induced_breakdown(p)
        rows.append({
            'rtn': p.rtn, 'tid': p.tid, 'name': p.name,
            'induced_thread': p.induced_thread, 'induced_external': p.induced_external,
            'thread_pct': thread_pct, 'external_pct': external_pct,
        })
    table = pd.DataFrame(rows, columns=['rtn', 'tid', 'name', 'induced_thread',
                                        'induced_external', 'thread_pct', 'external_pct'])
    return table.sort_values(['thread_pct', 'rtn'], ascending=[False, True], kind='mergesort') \
        .reset_index(drop=True)


# ============================================================================
# CURVE FITTING
# ============================================================================

@dataclass
class FitResult:
    model: str
    params: Dict[str, float]
    residual: float
    exponent: float
    residuals: Dict[str, float] = field(default_factory=dict)


def _nlogn(n, a, b):
    return a * n * np.log2(np.maximum(n, 1.0)) + b


def _fit_model(model: str, x: np.ndarray, y: np.ndarray) -> Optional[Tuple[Dict[str, float], np.ndarray, float]]:
    if model == 'constant':
        c = float(y.mean())
        return {'a': c}, np.full_like(y, c), 0.0
    if model == 'linear':
        a, b = np.polyfit(x, y, 1)
        return {'a': float(a), 'b': float(b)}, a * x + b, 1.0
    if model == 'nlogn':
        (a, b), _ = curve_fit(_nlogn, x, y, p0=(1.0, 0.0))
        return {'a': float(a), 'b': float(b)}, _nlogn(x, a, b), 1.0
    if model == 'power':
        positive = (x > 0) & (y > 0)
        if np.count_nonzero(positive) < 2 or len(np.unique(x[positive])) < 2:
            return None
        b, log_a = np.polyfit(np.log(x[positive]), np.log(y[positive]), 1)
        a = float(np.exp(log_a))
        return {'a': a, 'b': float(b)}, a * np.power(x, b), float(b)
    raise ValueError(f"Unknown fit model: {model}")


def fit_curve(points: Iterable[Tuple[float, float]],
              models: Sequence[str] = FIT_MODELS) -> FitResult:
    """
    Least-squares fit of cost against size for each model, keep the best

    Residuals are sums of squared errors in linear space. Among models whose
    residual is within a relative tolerance of the best one, the earliest in
    `models` wins, so exact data picks the simplest family.

    Args:
        points: (size, cost) pairs
        models: Subset of constant, linear, nlogn, power, in preference order

    Returns:
        FitResult for the selected model

    Raises:
        InsufficientPoints: fewer than 3 distinct sizes
    """
    pairs = np.asarray(list(points), dtype=float).reshape(-1, 2)
    x, y = pairs[:, 0], pairs[:, 1]
    distinct = len(np.unique(x))
    if distinct < 3:
        raise InsufficientPoints(distinct)

    fitted = {}
    for model in models:
        result = _fit_model(model, x, y)
        if result is None:
            continue
        params, predicted, exponent = result
        residual = float(np.sum((y - predicted) ** 2))
        if np.isfinite(residual):
            fitted[model] = (params, residual, exponent)

    best = min(residual for _, residual, _ in fitted.values())
    tolerance = 1e-9 * max(1.0, float(np.sum(y ** 2)))
    for model in models:
        if model in fitted and fitted[model][1] <= best + tolerance:
            params, residual, exponent = fitted[model]
            return FitResult(model, params, residual, exponent,
                             {m: r for m, (_, r, _) in fitted.items()})
    raise AssertionError("no model selected")


def fit_profiles(profiles: Sequence[RoutineProfile],
                 models: Sequence[str] = FIT_MODELS) -> pd.DataFrame:
    """Fit worst-case cost against TRMS and against RMS for every profile with enough sizes"""
    rows = []
    for p in profiles:
        for metric in ('trms', 'rms'):
            points = p.points(metric)
            try:
                fit = fit_curve(zip(points['size'], points['max_cost']), models)
            except InsufficientPoints:
                continue
            rows.append({
                'rtn': p.rtn, 'tid': p.tid, 'name': p.name, 'metric': metric,
                'model': fit.model, 'exponent': fit.exponent, 'residual': fit.residual,
                'coef_a': fit.params.get('a', 0.0), 'coef_b': fit.params.get('b', 0.0),
            })
    return pd.DataFrame(rows, columns=['rtn', 'tid', 'name', 'metric', 'model', 'exponent',
                                       'residual', 'coef_a', 'coef_b'])


# ============================================================================
# REPORT DATASETS
# ============================================================================

def _plot_table(profiles: Sequence[RoutineProfile], value: str) -> pd.DataFrame:
    frames = []
    for p in profiles:
        for metric in ('trms', 'rms'):
            points = p.points(metric)[['size', value]].copy()
            points.insert(0, 'metric', metric)
            points.insert(0, 'name', p.name)
            points.insert(0, 'tid', p.tid)
            points.insert(0, 'rtn', p.rtn)
            frames.append(points)
    columns = ['rtn', 'tid', 'name', 'metric', 'size', value]
    if not frames:
        return pd.DataFrame(columns=columns)
    return pd.concat(frames, ignore_index=True)[columns]


def richness_table(profiles: Sequence[RoutineProfile]) -> pd.DataFrame:
    rows = []
    for p in profiles:
        thread_pct, external_pct = induced_breakdown(p)
        rows.append({
            'rtn': p.rtn, 'tid': p.tid, 'name': p.name, 'activations': p.activations,
            'distinct_trms': len(p.trms_points), 'distinct_rms': len(p.rms_points),
            'richness': profile_richness(p), 'input_volume': input_volume(p),
            'thread_pct': thread_pct, 'external_pct': external_pct,
        })
    return pd.DataFrame(rows, columns=['rtn', 'tid', 'name', 'activations', 'distinct_trms',
                                       'distinct_rms', 'richness', 'input_volume',
                                       'thread_pct', 'external_pct'])


def build_report(store: ProfileStore, merge_threads: bool = True,
                 names: Optional[Mapping[int, str]] = None,
                 models: Sequence[str] = FIT_MODELS) -> Dict[str, pd.DataFrame]:
    """
    Every report dataset, keyed by name, in a fixed order

    Returns:
        summary, worst_case, workload, richness, breakdown, fits, distributions
    """
    profiles = build_profiles(store, merge_threads, names)
    richness = richness_table(profiles)
    thread_pct, external_pct = induced_breakdown(store)

    summary = pd.DataFrame([{
        'tuples': len(store),
        'routines': len({p.rtn for p in profiles}),
        'truncated': sum(1 for t in store if t.truncated),
        'input_volume': input_volume(store),
        'thread_pct': thread_pct,
        'external_pct': external_pct,
    }])

    curves = []
    for metric in ('richness', 'input_volume', 'thread_pct', 'external_pct'):
        curve = distribution_curve(richness[metric])
        curve.insert(0, 'metric', metric)
        curves.append(curve)
    distributions = pd.concat(curves, ignore_index=True)

    return {
        'summary': summary,
        'worst_case': _plot_table(profiles, 'max_cost'),
        'workload': _plot_table(profiles, 'count'),
        'richness': richness,
        'breakdown': thread_external_table(profiles),
        'fits': fit_profiles(profiles, models),
        'distributions': distributions,
    }


def emit(datasets: Mapping[str, pd.DataFrame], output_format: str,
         destination: Union[str, Path]) -> List[Path]:
    """
    Write report datasets

    csv and parquet write one file per dataset into `destination`; json
    writes report.json and excel report.xlsx (one sheet per dataset).

    Returns:
        Paths written
    """
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    written = []

    if output_format == 'csv':
        for name, frame in datasets.items():
            path = destination / f"{name}.csv"
            frame.to_csv(path, index=False, lineterminator="\n")
            written.append(path)
    elif output_format == 'parquet':
        for name, frame in datasets.items():
            path = destination / f"{name}.parquet"
            frame.to_parquet(path, index=False)
            written.append(path)
    elif output_format == 'excel':
        path = destination / "report.xlsx"
        with pd.ExcelWriter(path, engine='openpyxl') as writer:
            for name, frame in datasets.items():
                frame.to_excel(writer, sheet_name=name, index=False)
        written.append(path)
    elif output_format == 'json':
        path = destination / "report.json"
        document = {name: json.loads(frame.to_json(orient='records')) for name, frame in datasets.items()}
        path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding='utf-8')
        written.append(path)
    else:
        raise ValueError(f"Unsupported output format: {output_format}")

    log.info(f"✓ Wrote {len(datasets)} dataset(s) as {output_format} to {destination}")
    return written
