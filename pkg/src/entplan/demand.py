"""Consumer-value and demand models plus sales diagnostics.

Three fitted forms connect prices/characteristics to sale volume:

* ``linear-delta``   — volume change as a weighted sum of input changes,
  anchored at a baseline point for absolute predictions;
* ``log-linear``     — constant-elasticity power law V = A * p**elasticity;
* ``piecewise-linear`` — per-segment lines with breakpoints at price
  quantiles, continuous by default (hinge basis).

All least-squares solves go through the normal equations with an explicit
rank check; a rank-deficient design is an error, never a silent
pseudo-inverse fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .datastore import Dataset, SaleRecord
from .errors import EntplanError

# Reliability thresholds: enough data, real association, small dispersion.
MIN_RELIABLE_SAMPLES = 10
MIN_RELIABLE_CORRELATION = 0.5
MAX_RELIABLE_DISPERSION = 0.25  # residual std as fraction of mean |V|

FORMS = ("linear-delta", "log-linear", "piecewise-linear")


class FitError(EntplanError):
    pass


class RankDeficientError(FitError):
    pass


@dataclass(frozen=True)
class Diagnostics:
    r_squared: float | None     # None when the response has no variation
    residual_std: float         # in volume units
    sample_size: int
    correlations: tuple[float, ...]  # per input variable, against the response
    mean_abs_response: float
    reliable: bool
    checks: tuple[tuple[str, bool], ...]  # (sample_size|correlation|dispersion, verdict)

    def failed_checks(self) -> tuple[str, ...]:
        return tuple(name for name, ok in self.checks if not ok)


@dataclass(frozen=True)
class ConsumerValueModel:
    weights: tuple[float, ...]
    characteristics: tuple[str, ...]
    residual_norm: float
    sample_size: int


@dataclass(frozen=True)
class DemandModel:
    form: str
    variables: tuple[str, ...]
    coefficients: tuple[float, ...]
    box: tuple[tuple[float, float], ...]              # validity per variable
    baseline: tuple[tuple[float, ...], float] | None  # (input point, volume)
    breakpoints: tuple[float, ...] = ()
    segments: tuple[tuple[float, float], ...] = ()    # (intercept, slope) per segment
    continuous: bool = True
    diagnostics: Diagnostics | None = None

    def __post_init__(self):
        if self.form not in FORMS:
            raise FitError(f"unknown demand model form {self.form!r}")
        if any(lo > hi for lo, hi in self.box):
            raise FitError("validity box is empty in at least one variable")
        if list(self.breakpoints) != sorted(set(self.breakpoints)):
            raise FitError("breakpoints must be strictly increasing")

    @property
    def scale(self) -> float:
        """Multiplier A of the log-linear form."""
        if self.form != "log-linear":
            raise FitError("scale is defined for log-linear models only")
        return math.exp(self.coefficients[0])

    @property
    def elasticity(self) -> float:
        if self.form != "log-linear":
            raise FitError("elasticity is defined for log-linear models only")
        return self.coefficients[1]


# ---------------------------------------------------------------------------
# Least squares core


def _solve_normal_equations(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    n, k = X.shape
    if n < k:
        raise FitError(f"sample too small: {n} observations for {k} parameters")
    if np.linalg.matrix_rank(X) < k:
        raise RankDeficientError("design matrix is rank deficient")
    gram = X.T @ X
    return np.linalg.solve(gram, X.T @ y)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Sample correlation, defined as 0 when either side has zero variance."""
    if len(x) < 2:
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(np.sum(xc * yc) / (sx * sy))


def _reliability(n: int, correlations: Sequence[float],
                 residual_std: float, mean_abs_response: float) -> tuple[bool, tuple]:
    max_corr = max((abs(c) for c in correlations), default=0.0)
    checks = (
        ("sample_size", n >= MIN_RELIABLE_SAMPLES),
        ("correlation", max_corr >= MIN_RELIABLE_CORRELATION),
        ("dispersion", residual_std <= MAX_RELIABLE_DISPERSION * mean_abs_response
                       if mean_abs_response > 0 else residual_std == 0.0),
    )
    return all(ok for _, ok in checks), checks


def _diagnostics(X: np.ndarray, response: np.ndarray, fitted: np.ndarray,
                 volumes: np.ndarray, predicted_volumes: np.ndarray,
                 centered_r2: bool) -> Diagnostics:
    """Fit diagnostics.

    R-squared lives in the fitting space (log space for log-linear,
    uncentered for through-origin fits); the residual deviation and the
    dispersion check are in volume units so reliability means the same
    thing for every form.
    """
    n = len(response)
    resid = response - fitted
    if centered_r2:
        sst = float(np.sum((response - response.mean()) ** 2))
    else:
        sst = float(np.sum(response ** 2))
    ssr = float(np.sum(resid ** 2))
    r2 = None if sst == 0.0 else max(0.0, min(1.0, 1.0 - ssr / sst))
    level_resid = volumes - predicted_volumes
    residual_std = float(np.sqrt(np.mean(level_resid ** 2)))
    mean_abs = float(np.mean(np.abs(volumes)))
    correlations = tuple(_pearson(X[:, j], response) for j in range(X.shape[1]))
    reliable, checks = _reliability(n, correlations, residual_std, mean_abs)
    return Diagnostics(r_squared=r2, residual_std=residual_std, sample_size=n,
                       correlations=correlations, mean_abs_response=mean_abs,
                       reliable=reliable, checks=checks)


# ---------------------------------------------------------------------------
# Consumer value (weighted characteristics)


def fit_consumer_value(observations: Sequence[tuple[Sequence[float], float]],
                       characteristics: Sequence[str] | None = None) -> ConsumerValueModel:
    """Weights minimizing squared error of value = sum(w_i * x_i).

    `observations` pairs a characteristic vector with the stated value.
    """
    if not observations:
        raise FitError("no survey observations")
    X = np.asarray([list(x) for x, _ in observations], dtype=float)
    y = np.asarray([q for _, q in observations], dtype=float)
    if X.ndim != 2:
        raise FitError("characteristic vectors must share one length")
    w = _solve_normal_equations(X, y)
    resid = y - X @ w
    names = tuple(characteristics) if characteristics is not None \
        else tuple(f"x{i + 1}" for i in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise FitError("characteristic name count does not match vector length")
    return ConsumerValueModel(weights=tuple(float(v) for v in w),
                              characteristics=names,
                              residual_norm=float(np.linalg.norm(resid)),
                              sample_size=len(y))


def consumer_value(model: ConsumerValueModel, x: Sequence[float]) -> float:
    if len(x) != len(model.weights):
        raise FitError(f"expected {len(model.weights)} characteristics, got {len(x)}")
    return float(sum(w * v for w, v in zip(model.weights, x)))


def survey_observations(ds: Dataset, characteristics: Sequence[str]
                        ) -> list[tuple[tuple[float, ...], float]]:
    """Pair each survey row with its goods' numeric characteristic vector."""
    values: dict[str, dict[str, float]] = {}
    for c in ds.character:
        if c.kind == "numeric" and c.name in characteristics:
            values.setdefault(c.goods_id, {})[c.name] = float(c.value)
    out = []
    for s in ds.surveys:
        chars = values.get(s.goods_id)
        if chars is None or len(chars) != len(characteristics):
            continue
        out.append((tuple(chars[name] for name in characteristics), s.stated_value))
    return out


# ---------------------------------------------------------------------------
# Demand model fitting


def fit_linear_demand(deltas: Sequence[tuple[Sequence[float], float]],
                      variables: Sequence[str] | None = None,
                      baseline: tuple[Sequence[float], float] | None = None,
                      box: Sequence[tuple[float, float]] | None = None) -> DemandModel:
    """Through-origin least squares on (input change, volume change) pairs.

    Without a baseline the model predicts volume changes around the origin;
    supplying (input point, volume) anchors absolute predictions.
    """
    if not deltas:
        raise FitError("no observations")
    X = np.asarray([list(dx) for dx, _ in deltas], dtype=float)
    y = np.asarray([dv for _, dv in deltas], dtype=float)
    coeff = _solve_normal_equations(X, y)
    fitted = X @ coeff
    diag = _diagnostics(X, y, fitted, y, fitted, centered_r2=False)
    names = tuple(variables) if variables is not None \
        else tuple(f"dx{i + 1}" for i in range(X.shape[1]))
    if box is None:
        box = tuple((float(X[:, j].min()), float(X[:, j].max())) for j in range(X.shape[1]))
    anchor = (tuple(float(v) for v in baseline[0]), float(baseline[1])) if baseline \
        else (tuple(0.0 for _ in names), 0.0)
    return DemandModel(form="linear-delta", variables=names,
                       coefficients=tuple(float(c) for c in coeff),
                       box=tuple(box), baseline=anchor, diagnostics=diag)


def linear_price_model(intercept: float, slope: float,
                       price_box: tuple[float, float],
                       variable: str = "price") -> DemandModel:
    """Hand-built volume = intercept + slope * price model (no diagnostics)."""
    return DemandModel(form="linear-delta", variables=(variable,),
                       coefficients=(slope,), box=(price_box,),
                       baseline=((0.0,), intercept), diagnostics=None)


def _price_volume(obs) -> tuple[float, float]:
    if isinstance(obs, SaleRecord):
        return obs.price, obs.volume
    price, volume = obs
    return float(price), float(volume)


def _quantile_breakpoints(prices: np.ndarray, count: int) -> tuple[float, ...]:
    qs = [(i + 1) / (count + 1) for i in range(count)]
    points = np.quantile(prices, qs)
    lo, hi = float(prices.min()), float(prices.max())
    unique = sorted({float(p) for p in points} - {lo, hi})
    return tuple(unique)


def fit_demand_curve(sales, form: str, *,
                     breakpoint_count: int = 2,
                     continuous: bool = True) -> DemandModel:
    """Fit a price-to-volume curve from sale records or (price, volume) pairs."""
    if form not in ("log-linear", "piecewise-linear"):
        raise FitError(f"unsupported form {form!r}")
    pairs = [_price_volume(s) for s in sales]
    if not pairs:
        raise FitError("no observations")
    prices = np.asarray([p for p, _ in pairs], dtype=float)
    volumes = np.asarray([v for _, v in pairs], dtype=float)
    box = ((float(prices.min()), float(prices.max())),)
    baseline = ((float(prices.mean()),), float(volumes.mean()))

    if form == "log-linear":
        if np.any(prices <= 0) or np.any(volumes <= 0):
            raise FitError("log-linear form requires positive prices and volumes")
        lp = np.log(prices)
        lv = np.log(volumes)
        X = np.column_stack([np.ones_like(lp), lp])
        coeff = _solve_normal_equations(X, lv)
        fitted = X @ coeff
        diag = _diagnostics(lp[:, None], lv, fitted, volumes, np.exp(fitted),
                            centered_r2=True)
        return DemandModel(form="log-linear", variables=("price",),
                           coefficients=(float(coeff[0]), float(coeff[1])),
                           box=box, baseline=baseline, diagnostics=diag)

    return _fit_piecewise(prices, volumes, box, baseline,
                          breakpoint_count=breakpoint_count, continuous=continuous)


def _fit_piecewise(prices, volumes, box, baseline, *, breakpoint_count, continuous):
    breaks = _quantile_breakpoints(prices, breakpoint_count)
    if continuous:
        columns = [np.ones_like(prices), prices]
        columns += [np.maximum(prices - t, 0.0) for t in breaks]
        X = np.column_stack(columns)
        coeff = _solve_normal_equations(X, volumes)
        fitted = X @ coeff
        # Hinge coefficients to per-segment (intercept, slope) lines.
        segments = []
        intercept, slope = float(coeff[0]), float(coeff[1])
        segments.append((intercept, slope))
        for t, c in zip(breaks, coeff[2:]):
            slope += float(c)
            intercept = segments[-1][0] + segments[-1][1] * t - slope * t
            segments.append((intercept, slope))
    else:
        edges = [box[0][0], *breaks, box[0][1]]
        segments = []
        fitted = np.empty_like(volumes)
        for i in range(len(edges) - 1):
            lo, hi = edges[i], edges[i + 1]
            mask = (prices >= lo) & (prices <= hi if i == len(edges) - 2 else prices < hi)
            if mask.sum() < 2:
                raise FitError(f"segment [{lo}, {hi}] has fewer than 2 observations")
            Xs = np.column_stack([np.ones(int(mask.sum())), prices[mask]])
            cs = _solve_normal_equations(Xs, volumes[mask])
            segments.append((float(cs[0]), float(cs[1])))
            fitted[mask] = Xs @ cs
    diag = _diagnostics(prices[:, None], volumes, fitted, volumes, fitted,
                        centered_r2=True)
    return DemandModel(form="piecewise-linear", variables=("price",),
                       coefficients=tuple(float(c) for seg in segments for c in seg),
                       box=box, baseline=baseline,
                       breakpoints=breaks, segments=tuple(segments),
                       continuous=continuous, diagnostics=diag)


# ---------------------------------------------------------------------------
# Evaluation


def _as_point(model: DemandModel, point) -> tuple[float, ...]:
    if isinstance(point, (int, float)):
        point = (float(point),)
    point = tuple(float(v) for v in point)
    if len(point) != len(model.variables):
        raise FitError(f"model expects {len(model.variables)} inputs, got {len(point)}")
    return point


def _segment_index(model: DemandModel, price: float) -> int:
    i = 0
    for t in model.breakpoints:
        if price >= t:
            i += 1
    return min(i, len(model.segments) - 1)


def predict_volume(model: DemandModel, point) -> tuple[float, bool]:
    """Evaluate the fitted form at `point`.

    Returns (volume, inside_validity_box).  The value is computed even when
    the point leaves the box; the flag marks extrapolation.
    """
    x = _as_point(model, point)
    in_box = all(lo <= v <= hi for v, (lo, hi) in zip(x, model.box))
    if model.form == "linear-delta":
        x0, v0 = model.baseline if model.baseline else ((0.0,) * len(x), 0.0)
        value = v0 + sum(c * (v - b) for c, v, b in zip(model.coefficients, x, x0))
    elif model.form == "log-linear":
        if x[0] <= 0:
            raise FitError("log-linear models require a positive price")
        value = math.exp(model.coefficients[0] + model.coefficients[1] * math.log(x[0]))
    else:
        intercept, slope = model.segments[_segment_index(model, x[0])]
        value = intercept + slope * x[0]
    return float(value), in_box


def predict_volume_batch(model: DemandModel, prices: np.ndarray) -> np.ndarray:
    """Vectorized prediction over an array of prices (single-input models)."""
    if len(model.variables) != 1:
        raise FitError("batch prediction supports single-input models only")
    p = np.asarray(prices, dtype=float)
    if model.form == "linear-delta":
        (x0,), v0 = model.baseline if model.baseline else ((0.0,), 0.0)
        return v0 + model.coefficients[0] * (p - x0)
    if model.form == "log-linear":
        return np.exp(model.coefficients[0] + model.coefficients[1] * np.log(p))
    idx = np.searchsorted(np.asarray(model.breakpoints), p, side="right")
    idx = np.minimum(idx, len(model.segments) - 1)
    seg = np.asarray(model.segments)
    return seg[idx, 0] + seg[idx, 1] * p


def reliability_check(model: DemandModel) -> Diagnostics:
    """Re-evaluate the three reliability conditions on a fitted model."""
    diag = model.diagnostics
    if diag is None:
        raise FitError("model carries no fit diagnostics")
    reliable, checks = _reliability(diag.sample_size, diag.correlations,
                                    diag.residual_std, diag.mean_abs_response)
    return replace(diag, reliable=reliable, checks=checks)


# ---------------------------------------------------------------------------
# Dataset-driven fitting and sales analysis


def demand_deltas(ds: Dataset, goods_id: str) -> list[tuple[tuple[float], float]]:
    """(price change, volume change) between consecutive quarters of a goods."""
    per_quarter: dict = {}
    for rec in ds.logist:
        if rec.goods_id != goods_id:
            continue
        vol, val = per_quarter.get(rec.period, (0.0, 0.0))
        per_quarter[rec.period] = (vol + rec.volume, val + rec.volume * rec.price)
    points = sorted(((p, vol, val / vol) for p, (vol, val) in per_quarter.items() if vol > 0),
                    key=lambda t: t[0].sort_key())
    out = []
    for (_, v0, p0), (_, v1, p1) in zip(points, points[1:]):
        out.append(((p1 - p0,), v1 - v0))
    return out


def fit_demand_from_sales(ds: Dataset, goods_id: str, form: str, **kwargs) -> DemandModel:
    """Fit a demand model of the given form from a goods' sale records."""
    sales = [r for r in ds.logist if r.goods_id == goods_id]
    if not sales:
        raise FitError(f"no sales for goods {goods_id!r}")
    if form == "linear-delta":
        deltas = demand_deltas(ds, goods_id)
        if not deltas:
            raise FitError(f"need sales in at least two quarters for {goods_id!r}")
        prices = [r.price for r in sales]
        latest = max(sales, key=lambda r: r.period.sort_key())
        return fit_linear_demand(deltas, variables=("price",),
                                 baseline=((latest.price,), latest.volume),
                                 box=((min(prices), max(prices)),))
    return fit_demand_curve(sales, form, **kwargs)


@dataclass(frozen=True)
class SignificanceEntry:
    characteristic: str
    kind: str                      # numeric | category
    correlation: float | None      # numeric characteristics
    variance_ratio: float | None   # categorical characteristics


def characteristic_significance(ds: Dataset, goods_id: str) -> list[SignificanceEntry]:
    """Rank the goods' characteristics by association with sale volume.

    Observations are per-quarter volumes of every goods in the same class.
    Numeric characteristics get a Pearson correlation; categorical ones a
    one-way variance ratio (between-group over within-group mean squares).
    Ranking is by |correlation| first, then variance ratio.
    """
    goods = ds.goods_by_id().get(goods_id)
    if goods is None:
        raise FitError(f"unknown goods {goods_id!r}")
    own_chars = [c for c in ds.character if c.goods_id == goods_id]
    if not own_chars:
        raise FitError(f"goods {goods_id!r} has no characteristic records")
    peers = [g.id for g in ds.tovar
             if g.goods_class == goods.goods_class and g.kind == goods.kind]
    volumes: dict[tuple[str, Period], float] = {}
    for rec in ds.logist:
        if rec.goods_id in peers:
            key = (rec.goods_id, rec.period)
            volumes[key] = volumes.get(key, 0.0) + rec.volume
    if not any(g == goods_id for g, _ in volumes):
        raise FitError(f"no sales for goods {goods_id!r}")
    char_values: dict[tuple[str, str], float | str] = {}
    for c in ds.character:
        if c.goods_id in peers:
            char_values[(c.goods_id, c.name)] = c.value

    entries = []
    for c in own_chars:
        xs, ys = [], []
        for (g, _), vol in volumes.items():
            value = char_values.get((g, c.name))
            if value is None:
                continue
            xs.append(value)
            ys.append(vol)
        if c.kind == "numeric":
            corr = _pearson(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float))
            entries.append(SignificanceEntry(c.name, "numeric", corr, None))
        else:
            entries.append(SignificanceEntry(c.name, "category", None,
                                             _variance_ratio(xs, ys)))
    entries.sort(key=lambda e: (-(abs(e.correlation) if e.correlation is not None else 0.0),
                                -(e.variance_ratio if e.variance_ratio is not None else 0.0),
                                e.characteristic))
    return entries


def _variance_ratio(labels: list, values: list[float]) -> float:
    groups: dict = {}
    for label, v in zip(labels, values):
        groups.setdefault(label, []).append(v)
    n = len(values)
    k = len(groups)
    if n <= k or k < 2:
        return 0.0
    grand = sum(values) / n
    between = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups.values()) / (k - 1)
    within = sum(sum((v - sum(g) / len(g)) ** 2 for v in g) for g in groups.values()) / (n - k)
    if within == 0.0:
        return math.inf if between > 0 else 0.0
    return between / within


@dataclass(frozen=True)
class ComplaintEntry:
    document_id: str
    excerpt: str
    action_taken: bool


def complaint_summary(ds: Dataset, goods_id: str, topic: str,
                      excerpt_length: int = 120) -> list[ComplaintEntry]:
    """Negative documents for the goods and topic, with follow-up status.

    A complaint counts as acted on when an action document references it.
    """
    answered = {d.ref_id for d in ds.docum if d.kind == "action" and d.ref_id}
    out = []
    for d in ds.docum:
        if d.goods_id == goods_id and d.topic == topic and d.sentiment == "negative":
            out.append(ComplaintEntry(d.id, d.text[:excerpt_length], d.id in answered))
    return out


# ---------------------------------------------------------------------------
# Serialization (documented in docs/formats.md)


def model_to_dict(model: DemandModel) -> dict:
    out = {
        "form": model.form,
        "variables": list(model.variables),
        "coefficients": list(model.coefficients),
        "box": [list(b) for b in model.box],
        "baseline": [list(model.baseline[0]), model.baseline[1]] if model.baseline else None,
    }
    if model.form == "piecewise-linear":
        out["breakpoints"] = list(model.breakpoints)
        out["segments"] = [list(s) for s in model.segments]
        out["continuous"] = model.continuous
    if model.diagnostics is not None:
        d = model.diagnostics
        out["diagnostics"] = {
            "r_squared": d.r_squared,
            "residual_std": d.residual_std,
            "sample_size": d.sample_size,
            "correlations": list(d.correlations),
            "mean_abs_response": d.mean_abs_response,
            "reliable": d.reliable,
            "checks": {name: ok for name, ok in d.checks},
        }
    return out


def model_from_dict(data: dict) -> DemandModel:
    diag = None
    if data.get("diagnostics"):
        d = data["diagnostics"]
        diag = Diagnostics(
            r_squared=d.get("r_squared"),
            residual_std=d["residual_std"],
            sample_size=d["sample_size"],
            correlations=tuple(d.get("correlations", ())),
            mean_abs_response=d.get("mean_abs_response", 0.0),
            reliable=d["reliable"],
            checks=tuple(d.get("checks", {}).items()),
        )
    baseline = data.get("baseline")
    return DemandModel(
        form=data["form"],
        variables=tuple(data["variables"]),
        coefficients=tuple(data["coefficients"]),
        box=tuple((float(lo), float(hi)) for lo, hi in data["box"]),
        baseline=(tuple(baseline[0]), float(baseline[1])) if baseline else None,
        breakpoints=tuple(data.get("breakpoints", ())),
        segments=tuple(tuple(s) for s in data.get("segments", ())),
        continuous=data.get("continuous", True),
        diagnostics=diag,
    )
