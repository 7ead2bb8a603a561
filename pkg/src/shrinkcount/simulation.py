"""Monte Carlo MSE-ratio studies for the three count families.

Each replicate draws true parameters from scaled beta distributions,
simulates a dataset, and compares cross-validated penalized estimates with
the MLE.  Replicate ``k`` owns the RNG stream spawned from
``(master_seed, k)``, so results do not depend on how replicates are
distributed over worker processes.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from .count_models import CountDataset, ModelFamily, ModelParams, mle_fit
from .cross_validation import cv_compare, default_lambda_grid, load_grid, make_folds, pick_min_cv
from .errors import ConfigError, DomainError
from .penalties import PenaltyKind, PenaltySpec

log = logging.getLogger(__name__)

SHAPES = {"skew": (2.0, 5.0), "flat": (1.25, 1.25), "bell": (10.0, 10.0)}
MAX_EXCLUDED_FRACTION = 0.01


@dataclass(frozen=True)
class ShapeSpec:
    shape: str
    a: float
    b: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise DomainError(f"unknown shape {self.shape!r}; expected one of {sorted(SHAPES)}")
        if not self.a < self.b:
            raise DomainError("scaled beta bounds need a < b")

    @property
    def beta_params(self) -> tuple[float, float]:
        return SHAPES[self.shape]

    def mean(self) -> float:
        s, t = self.beta_params
        return self.a + (self.b - self.a) * s / (s + t)

    def var(self) -> float:
        s, t = self.beta_params
        return (self.b - self.a) ** 2 * s * t / ((s + t) ** 2 * (s + t + 1))


def sample_scaled_beta(spec: ShapeSpec, I: int, rng: np.random.Generator) -> np.ndarray:
    s, t = spec.beta_params
    return spec.a + (spec.b - spec.a) * rng.beta(s, t, size=I)


@dataclass(frozen=True)
class SimConfig:
    family: ModelFamily
    primary: ShapeSpec
    secondary: ShapeSpec | None = None
    penalties: tuple[PenaltySpec, ...] = ()
    I: int = 10
    N: int = 40
    n: int = 50
    K: int = 500
    V: int = 10
    master_seed: int = 0
    grid: np.ndarray = field(default_factory=default_lambda_grid, compare=False)
    name: str = "sim"
    # ZIB only: which probability the primary bounds describe ("pi", or "p" with pi = p / (1 - gamma))
    zib_primary: str = "pi"

    def __post_init__(self):
        problems = []
        if self.family is not ModelFamily.BINOMIAL and self.secondary is None:
            problems.append(f"{self.family.value} needs secondary bounds a2, b2")
        if self.family is ModelFamily.BINOMIAL and self.secondary is not None:
            problems.append("binomial takes no secondary bounds")
        prob_specs = [self.primary] + ([self.secondary] if self.family is ModelFamily.ZIB else [])
        for s in prob_specs:
            if s is not None and not (0 <= s.a and s.b <= 1):
                problems.append(f"probability bounds ({s.a}, {s.b}) must lie in [0, 1]")
        if self.family is ModelFamily.BETABIN and self.secondary is not None:
            if not (1 < self.secondary.a and self.secondary.b < self.N):
                problems.append(f"overdispersion bounds must lie in (1, N={self.N})")
        if self.zib_primary not in ("pi", "p"):
            problems.append(f"zib_primary must be 'pi' or 'p', got {self.zib_primary!r}")
        elif self.zib_primary == "p" and self.family is ModelFamily.ZIB and self.secondary is not None:
            if self.primary.b > 1.0 - self.secondary.b:
                problems.append("zib_primary = p needs b <= 1 - b2 so that pi stays below 1")
        if self.K < 1:
            problems.append("K must be >= 1")
        if self.I < 1 or self.N < 1 or self.n < 1:
            problems.append("I, N and n must be positive")
        if not (2 <= self.V <= self.n):
            problems.append("need 2 <= V <= n")
        if not self.penalties:
            problems.append("at least one penalty is required")
        for pen in self.penalties:
            try:
                pen.check_family(self.family)
            except ValueError as exc:
                problems.append(str(exc))
            if pen.kind is PenaltyKind.PEN4 and self.family is not ModelFamily.BINOMIAL:
                problems.append("pen4 is only supported for the binomial family")
        if problems:
            raise ConfigError(problems)


# ---------------------------------------------------------------------------
# data generation


def sample_true_params(config: SimConfig, rng: np.random.Generator) -> ModelParams:
    I = config.I
    first = sample_scaled_beta(config.primary, I, rng)
    if config.family is ModelFamily.BINOMIAL:
        return ModelParams(config.family, first[:, None])
    second = sample_scaled_beta(config.secondary, I, rng)
    if config.family is ModelFamily.ZIB:
        pi = first / (1.0 - second) if config.zib_primary == "p" else first
        return ModelParams(config.family, np.stack([pi, second], axis=1))
    total = (config.N - second) / (second - 1.0)
    return ModelParams(config.family, np.stack([first * total, (1 - first) * total], axis=1))


def generate_dataset(family, true_params: ModelParams, N: int, n: int, rng: np.random.Generator) -> CountDataset:
    family = ModelFamily.parse(family)
    v = np.asarray(true_params.values)
    I = v.shape[0]
    if family is ModelFamily.BINOMIAL:
        x = rng.binomial(N, v[:, :1], size=(I, n))
    elif family is ModelFamily.ZIB:
        draws = rng.binomial(N, v[:, :1], size=(I, n))
        inflated = rng.random((I, n)) < v[:, 1:2]
        x = np.where(inflated, 0, draws)
    else:
        t = rng.beta(v[:, :1], v[:, 1:2], size=(I, n))
        x = rng.binomial(N, t)
    return CountDataset.from_arrays(x, N)


def ssd(p1, p2) -> float:
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    if p1.shape != p2.shape:
        raise DomainError("ssd needs equal-length vectors")
    return float(np.sum((p1 - p2) ** 2))


def expected_count_summary(config: SimConfig) -> tuple[float, float]:
    """Average mean and root average variance of X_ij over the parameter distribution."""
    N = config.N
    m = config.primary.mean()
    m2 = config.primary.var() + m * m
    if config.family is ModelFamily.BINOMIAL:
        ex = N * m
        var = N * (m - m2) + N * N * config.primary.var()
    elif config.family is ModelFamily.ZIB and config.zib_primary == "p":
        # X | p, gamma has mean N p and second moment N p + N (N - 1) p^2 / (1 - gamma)
        ex = N * m
        ex2 = N * m + N * (N - 1) * m2 * _mean_inverse_complement(config.secondary)
        var = ex2 - ex * ex
    elif config.family is ModelFamily.ZIB:
        keep = 1.0 - config.secondary.mean()
        ex = N * m * keep
        ex2 = keep * (N * (m - m2) + N * N * m2)
        var = ex2 - ex * ex
    else:
        nu = config.secondary.mean()
        ex = N * m
        ex2 = N * (m - m2) * nu + N * N * m2
        var = ex2 - ex * ex
    return ex, math.sqrt(var)


def _mean_inverse_complement(spec: ShapeSpec) -> float:
    """E[1 / (1 - g)] for g drawn from ``spec``, by quadrature."""
    s, t = spec.beta_params
    dist = stats.beta(s, t)
    value, _ = integrate.quad(lambda u: dist.pdf(u) / (1.0 - spec.a - (spec.b - spec.a) * u), 0.0, 1.0)
    return value


# ---------------------------------------------------------------------------
# replicates and aggregation


def replicate_rng(master_seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(k,)))


def _param_targets(family: ModelFamily, params: ModelParams) -> dict[str, np.ndarray]:
    out = {"p": params.mean}
    if family is not ModelFamily.BINOMIAL:
        for name in family.param_names:
            out[name] = params.column(name)
    return out


def run_replicate(config: SimConfig, k: int) -> dict:
    """SSD of every estimator for replicate ``k``; never raises."""
    try:
        rng = replicate_rng(config.master_seed, k)
        truth = sample_true_params(config, rng)
        data = generate_dataset(config.family, truth, config.N, config.n, rng)
        folds = make_folds(data, config.V, int(rng.integers(2**31)))
        results = cv_compare(config.family, list(config.penalties), config.grid, data, folds)
        estimates = {"mle": mle_fit(config.family, data)}
        for pen, res in zip(config.penalties, results):
            estimates[pen.name] = res.final_params
        chosen = pick_min_cv(results) if len(results) > 1 else None
        if chosen is not None:
            estimates["mincv"] = chosen.final_params
        target = _param_targets(config.family, truth)
        out = {}
        for est, params in estimates.items():
            got = _param_targets(config.family, params)
            out[est] = {name: ssd(got[name], target[name]) for name in target}
        bad = [e for e, d in out.items() if not all(np.isfinite(v) for v in d.values())]
        if bad:
            raise FloatingPointError(f"non-finite SSD for {bad}")
        return {
            "k": k,
            "ok": True,
            "ssd": out,
            "lambda_opt": {pen.name: r.lambda_opt for pen, r in zip(config.penalties, results)},
            "mincv_choice": chosen.penalty.name if chosen is not None else None,
            "unconverged": sum(int(np.any(r.flags)) for r in results),
        }
    except Exception as exc:  # noqa: BLE001 - failures are counted, not fatal
        log.warning("replicate %d failed: %s", k, exc)
        return {"k": k, "ok": False, "error": repr(exc)}


@dataclass
class MSEReport:
    name: str
    family: ModelFamily
    estimators: list[str]
    params: list[str]
    ratios: dict[str, dict[str, float]]
    mean_count: float
    sd_count: float
    K: int
    excluded: int
    master_seed: int
    mincv_choices: dict[str, int] = field(default_factory=dict)
    lambda_opt: dict[str, list[float]] = field(default_factory=dict)
    errors: list[str] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.excluded < MAX_EXCLUDED_FRACTION * self.K or (self.excluded == 0)

    def ratio(self, estimator: str, param: str = "p") -> float:
        return self.ratios[estimator][param]

    def rows(self) -> list[dict]:
        out = []
        for est in self.estimators:
            row = {"config": self.name, "family": self.family.value, "estimator": est,
                   "mean_count": round(self.mean_count, 6), "sd_count": round(self.sd_count, 6)}
            for par in self.params:
                row[f"ratio_{par}"] = self.ratios[est][par]
            row["K_used"] = self.K - self.excluded
            out.append(row)
        return out


def _worker_count(workers):
    if workers is None:
        env = os.environ.get("SHRINKCOUNT_THREADS")
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def mse_ratio_study(config: SimConfig, workers: int | None = None) -> MSEReport:
    """Run all K replicates and aggregate MSE ratios relative to the MLE."""
    workers = min(_worker_count(workers), config.K)
    ks = range(config.K)
    if workers == 1:
        reps = [run_replicate(config, k) for k in ks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(run_replicate, [config] * config.K, ks, chunksize=max(1, config.K // (4 * workers))))

    good = [r for r in reps if r["ok"]]
    excluded = len(reps) - len(good)
    if not good:
        raise RuntimeError("every replicate failed: " + "; ".join(r["error"] for r in reps[:3]))
    estimators = list(good[0]["ssd"])
    params = list(good[0]["ssd"]["mle"])
    totals = {e: {p: math.fsum(r["ssd"][e][p] for r in good) for p in params} for e in estimators}
    ratios = {e: {p: totals[e][p] / totals["mle"][p] if totals["mle"][p] > 0 else float("nan")
                  for p in params} for e in estimators}
    choices: dict[str, int] = {}
    for r in good:
        if r["mincv_choice"] is not None:
            choices[r["mincv_choice"]] = choices.get(r["mincv_choice"], 0) + 1
    ex, sd = expected_count_summary(config)
    report = MSEReport(
        name=config.name, family=config.family, estimators=estimators, params=params,
        ratios=ratios, mean_count=ex, sd_count=sd, K=config.K, excluded=excluded,
        master_seed=config.master_seed, mincv_choices=choices,
        lambda_opt={pen.name: [r["lambda_opt"][pen.name] for r in good] for pen in config.penalties},
        errors=[r["error"] for r in reps if not r["ok"]],
    )
    if not report.valid:
        log.warning("%s: %d of %d replicates excluded; run marked invalid", config.name, excluded, config.K)
    return report


# ---------------------------------------------------------------------------
# config files

_INT_KEYS = ("I", "N", "n", "K", "V", "seed")
_KNOWN = {"name", "family", "shape", "a", "b", "a2", "b2", "penalties", "kappa", "grid", "zib_primary", *_INT_KEYS}


def parse_config_text(text: str, name: str = "sim", base_dir=None) -> SimConfig:
    """Parse ``key = value`` lines; every problem is reported at once."""
    raw: dict[str, str] = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN:
            problems.append(f"line {lineno}: unknown key {key!r}")
        raw[key] = value

    for key in ("family", "shape", "a", "b", "penalties"):
        if key not in raw:
            problems.append(f"missing required key {key!r}")

    def number(key, cast, default=None):
        if key not in raw:
            return default
        try:
            return cast(raw[key])
        except ValueError:
            problems.append(f"{key} = {raw[key]!r} is not a valid {cast.__name__}")
            return default

    family = None
    if "family" in raw:
        try:
            family = ModelFamily.parse(raw["family"])
        except ValueError:
            problems.append(f"unknown family {raw['family']!r}")
    shape = raw.get("shape", "").lower()
    if shape and shape not in SHAPES:
        problems.append(f"unknown shape {shape!r}")
    a, b = number("a", float), number("b", float)
    a2, b2 = number("a2", float), number("b2", float)
    ints = {k: number(k, int) for k in _INT_KEYS}
    kappa = number("kappa", float)

    penalties = []
    for tok in raw.get("penalties", "").split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            penalties.append(PenaltySpec.parse(tok, family, kappa))
        except (ValueError, TypeError) as exc:
            problems.append(f"penalty {tok!r}: {exc}")

    grid = default_lambda_grid()
    if raw.get("grid", "default") != "default":
        gpath = Path(raw["grid"])
        if base_dir is not None and not gpath.is_absolute():
            gpath = Path(base_dir) / gpath
        try:
            grid = load_grid(gpath)
        except (OSError, ValueError) as exc:
            problems.append(f"grid: {exc}")

    primary = secondary = None
    if a is not None and b is not None and shape in SHAPES:
        try:
            primary = ShapeSpec(shape, a, b)
        except DomainError as exc:
            problems.append(str(exc))
        if a2 is not None and b2 is not None:
            try:
                secondary = ShapeSpec(shape, a2, b2)
            except DomainError as exc:
                problems.append(str(exc))
    if problems:
        raise ConfigError(problems)

    kwargs = {k: v for k, v in ints.items() if v is not None and k != "seed"}
    try:
        return SimConfig(
            family=family, primary=primary, secondary=secondary, penalties=tuple(penalties),
            master_seed=ints["seed"] if ints["seed"] is not None else 0,
            grid=grid, name=raw.get("name", name), zib_primary=raw.get("zib_primary", "pi").lower(), **kwargs,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError([str(exc)]) from None


CONFIG_DIR = Path(__file__).parent / "configs"


def bundled_configs() -> list[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.cfg"))


def load_config(path_or_name) -> SimConfig:
    """Load a config file, or a bundled config by name."""
    path = Path(path_or_name)
    if not path.exists():
        candidate = CONFIG_DIR / f"{path_or_name}.cfg"
        if not candidate.exists():
            raise ConfigError([f"no config file or bundled config named {str(path_or_name)!r}"])
        path = candidate
    return parse_config_text(path.read_text(), name=path.stem, base_dir=path.parent)
