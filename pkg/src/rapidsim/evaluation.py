"""Monte Carlo experiments: configuration, paired trials, rates and coverage.

One trial draws a deployment and its channels, then for every power point
runs the ES and RDB measurement protocols once each.  A ``+RAPID`` scheme
re-uses the estimates of its base scheme and only changes beam selection,
so the comparison is paired by construction.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .channel import codebook, generate_channel
from .fusion import RULES, PairGeometry, fuse_network, select_beams, share_rays
from .geometry import NetworkDeployment, build_intercept_table
from .measurement import assemble_cs, draw_schedule, es_schedule, observe
from .sparse_recovery import RecoveryConfig, SOLVERS, recover

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

SCHEMES = ("ES", "RDB", "ES+RAPID", "RDB+RAPID")
NOISE_REFERENCES = ("measurement", "nominal")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class NumericError(RuntimeError):
    """A trial produced non-finite numbers."""


@dataclass
class ExperimentConfig:
    B: int = 3
    N_UE: int = 16
    N_BS: int = 32
    R_UE: int = 4
    R_BS: int = 8
    T_E: int = 48
    grid_half_width: float = 50.0
    min_distance: float = 1.0
    beta: float = 4.0
    N0: float = 1e-5
    P_dBm: list = field(default_factory=lambda: [0.0, 10.0])
    trials: int = 100
    seed: int = 0
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    share_n_d: int | None = None
    R_th: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0, 8.0])
    expected_paths: int = 1
    n_nlos: int = 0
    fusion_rule: str = "max"
    fusion_noise: str = "measurement"
    select_threshold: float = 0.0
    workers: int = 1
    # recovery
    solver: str = "omp"
    sparsity_k: int | None = None
    gamma: float | None = None
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("B", "N_UE", "N_BS", "R_UE", "R_BS", "T_E", "trials",
                     "expected_paths", "workers"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.R_UE > self.N_UE or self.R_BS > self.N_BS:
            raise ConfigError("RF chain count exceeds the number of candidate beams")
        if self.N_BS % self.R_BS:
            raise ConfigError("R_BS must divide N_BS for the exhaustive-search schedule")
        if self.grid_half_width <= 0 or self.min_distance < 0:
            raise ConfigError("grid_half_width must be > 0 and min_distance >= 0")
        if self.beta <= 0 or self.N0 <= 0:
            raise ConfigError("beta and N0 must be positive")
        if not self.P_dBm:
            raise ConfigError("P_dBm needs at least one power point")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigError(f"unknown schemes {bad}; choose from {SCHEMES}")
        if any(s.endswith("+RAPID") for s in self.schemes) and self.B < 2:
            raise ConfigError("RAPID schemes need at least two base stations")
        if self.share_n_d is not None and self.share_n_d < 1:
            raise ConfigError("share_n_d must be >= 1")
        if any(t < 0 for t in self.R_th):
            raise ConfigError("R_th values must be >= 0")
        if self.fusion_rule not in RULES:
            raise ConfigError(f"fusion_rule must be one of {RULES}")
        if self.fusion_noise not in NOISE_REFERENCES:
            raise ConfigError(f"fusion_noise must be one of {NOISE_REFERENCES}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")
        try:
            self.recovery()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def recovery(self) -> RecoveryConfig:
        k = self.expected_paths if self.sparsity_k is None else self.sparsity_k
        return RecoveryConfig(self.solver, k, self.gamma, self.max_iters, self.tol)

    @property
    def T_ES(self) -> int:
        return self.N_UE * self.N_BS // self.R_BS

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            if path.suffix.lower() == ".json":
                data = json.loads(text)
            else:
                data = tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a table/object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


def dbm_to_linear(p_dbm) -> float:
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def link_snr_db(r: float, beta: float, N0: float, P: float = 1.0) -> float:
    """Average per-path SNR ``P r^-beta / N0`` in dB."""
    return float(10 * np.log10(P * r ** -beta / N0))


def achievable_rate(H, W_d, F_d, P: float, N0: float) -> float:
    """``log2 det(I + P/N0 W_d^H H F_d F_d^H H^H W_d)`` in bits/s/Hz."""
    H = np.asarray(H)
    W_d = np.atleast_2d(np.asarray(W_d).T).T
    F_d = np.atleast_2d(np.asarray(F_d).T).T
    if W_d.shape[0] != H.shape[0] or F_d.shape[0] != H.shape[1]:
        raise ValueError(f"beam shapes {W_d.shape}, {F_d.shape} do not match H {H.shape}")
    G = W_d.conj().T @ H @ F_d
    M = np.eye(G.shape[0]) + (P / N0) * (G @ G.conj().T)
    sign, logdet = np.linalg.slogdet(M)
    return max(float(logdet / np.log(2)), 0.0)


def beam_rate(H, beams, W_c, F_c, P: float, N0: float) -> float:
    """Rate of the selected ``(n_b, n_u)`` pairs, one stream per pair."""
    nb = [b for b, _ in beams]
    nu = [u for _, u in beams]
    return achievable_rate(H, W_c[:, nb], F_c[:, nu], P, N0)


def coverage_counts(rates, R_th: float) -> int:
    if R_th < 0:
        raise ValueError("R_th must be >= 0")
    return int(np.sum(np.asarray(rates) > R_th))


def _trial_rng(seed: int, trial: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, *tag])


def _baseline_beam(V_hat: np.ndarray):
    return select_beams(np.abs(V_hat), V_hat, 1)[0]


def run_trial(cfg: ExperimentConfig, trial: int) -> dict:
    """One paired trial.  Returns per scheme a ``(n_powers, B)`` array of rates
    and the matching selected beams."""
    rng = _trial_rng(cfg.seed, trial, 0)
    dep = NetworkDeployment.random(rng, cfg.B, cfg.grid_half_width, cfg.min_distance)
    channels = [generate_channel(dep, b, rng, cfg.N_BS, cfg.N_UE, cfg.beta, cfg.n_nlos)
                for b in range(cfg.B)]
    W_c, F_c = codebook(cfg.N_BS), codebook(cfg.N_UE)
    rec_cfg = cfg.recovery()
    bases = sorted({s.split("+")[0] for s in cfg.schemes}, key=["ES", "RDB"].index)
    rapid = any(s.endswith("+RAPID") for s in cfg.schemes)
    geometry = None
    table = None
    if rapid:
        table = build_intercept_table(dep, cfg.N_BS)
        geometry = {(b, p): PairGeometry(table, b, p, F_c)
                    for b in range(cfg.B) for p in range(cfg.B) if b != p}
    schedules = {
        "ES": lambda: es_schedule(cfg.N_UE, cfg.N_BS, cfg.R_BS, cfg.B),
        "RDB": lambda: draw_schedule([cfg.seed, trial, 1], cfg.T_E, cfg.N_UE, cfg.N_BS,
                                     cfg.R_UE, cfg.R_BS, cfg.B),
    }
    n_p = len(cfg.P_dBm)
    rates = {s: np.zeros((n_p, cfg.B)) for s in cfg.schemes}
    beams = {s: np.zeros((n_p, cfg.B, 2), dtype=int) for s in cfg.schemes}
    for base in bases:
        # fixed per-base stream tag so dropping a scheme leaves the others unchanged
        k_base = ("ES", "RDB").index(base)
        sched = schedules[base]()
        for ip, p_dbm in enumerate(cfg.P_dBm):
            P = float(dbm_to_linear(p_dbm))
            noise_rng = _trial_rng(cfg.seed, trial, 2 + k_base, ip)
            est = []
            gain = 1.0
            for b, ch in enumerate(channels):
                y = observe(ch.H, sched, b, W_c, F_c, P, cfg.N0, noise_rng)
                rec = assemble_cs(sched, b, y, P, cfg.N0)
                gain = rec.A_g
                est.append(recover(rec, rec_cfg).V)
            selections = {base: [_baseline_beam(V) for V in est]}
            if base + "+RAPID" in cfg.schemes:
                var = cfg.N0 / gain ** 2 if cfg.fusion_noise == "measurement" else cfg.N0
                sel = []
                for b in range(cfg.B):
                    shared = {p: share_rays(est[p], table, p, b, cfg.share_n_d)
                              for p in range(cfg.B) if p != b}
                    fused = fuse_network(b, est[b], shared, table, F_c, cfg.beta, var,
                                         geometry, cfg.fusion_rule)
                    top = select_beams(fused, est[b], 1, cfg.select_threshold)
                    sel.append(top[0] if top else _baseline_beam(est[b]))
                selections[base + "+RAPID"] = sel
            for scheme, sel in selections.items():
                if scheme not in rates:
                    continue
                for b, (nb, nu) in enumerate(sel):
                    rates[scheme][ip, b] = beam_rate(channels[b].H, [(nb, nu)], W_c, F_c,
                                                     P, cfg.N0)
                    beams[scheme][ip, b] = (nb, nu)
    for scheme, r in rates.items():
        if not np.all(np.isfinite(r)):
            raise NumericError(f"non-finite rate in trial {trial}, scheme {scheme}")
    return {"rates": rates, "beams": beams}


def _run_trial_star(args):
    return run_trial(*args)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rates: dict  # scheme -> (trials, n_powers, B)
    beams: dict  # scheme -> (trials, n_powers, B, 2)

    def link_stats(self, scheme: str) -> dict:
        r = self.rates[scheme]
        return {"min": r.min(axis=2), "mean": r.mean(axis=2), "max": r.max(axis=2)}

    def coverage(self, scheme: str, R_th: float) -> np.ndarray:
        """Link-option counts ``N_LO`` with shape ``(trials, n_powers)``."""
        return np.sum(self.rates[scheme] > R_th, axis=2)

    def coverage_cdf(self, scheme: str, R_th: float) -> np.ndarray:
        """``Pr(N_LO <= k)`` for ``k = 0..B``; shape ``(n_powers, B + 1)``."""
        n_lo = self.coverage(scheme, R_th)
        ks = np.arange(self.config.B + 1)
        return (n_lo[:, :, None] <= ks[None, None, :]).mean(axis=0)

    def summary_rows(self) -> list:
        """Rows ``(scheme, P_dBm, metric, value, ci95)``."""
        cfg = self.config
        n = self.rates[cfg.schemes[0]].shape[0]
        rows = []
        for scheme in cfg.schemes:
            stats = self.link_stats(scheme)
            for ip, p in enumerate(cfg.P_dBm):
                for name in ("min", "mean", "max"):
                    x = stats[name][:, ip]
                    sd = x.std(ddof=1) if n > 1 else 0.0
                    rows.append((scheme, p, f"rate_{name}", x.mean(), 1.96 * sd / math.sqrt(n)))
                for th in cfg.R_th:
                    cdf = self.coverage_cdf(scheme, th)[ip]
                    for k, q in enumerate(cdf):
                        rows.append((scheme, p, f"coverage_cdf_Rth={th:g}_NLO<={k}", q,
                                     1.96 * math.sqrt(q * (1 - q) / n)))
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "P_dBm", "metric", "value", "ci95"])
        for scheme, p, metric, value, ci in self.summary_rows():
            w.writerow([scheme, f"{p:g}", metric, repr(float(value)), repr(float(ci))])
        return buf.getvalue()

    def to_json(self, verbose: bool = False) -> str:
        doc = {
            "config": self.config.to_dict(),
            "summary": [dict(zip(("scheme", "P_dBm", "metric", "value", "ci95"),
                                 (s, float(p), m, float(v), float(c))))
                        for s, p, m, v, c in self.summary_rows()],
        }
        if verbose:
            doc["trials"] = {s: {"rates": self.rates[s].tolist(),
                                 "beams": self.beams[s].tolist()}
                             for s in self.config.schemes}
        return json.dumps(doc, indent=1)

    def write(self, out_dir, verbose: bool = False) -> tuple:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "results.csv", out / "results.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(self.to_json(verbose))
        return csv_path, json_path


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentResult:
    """Run ``cfg.trials`` paired trials and collect the per-link rates.

    Each trial seeds its own streams from ``(seed, trial index)``, so the
    result does not depend on ``workers``.
    """
    cfg.validate()
    workers = cfg.workers if workers is None else workers
    jobs = [(cfg, t) for t in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_trial_star, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outs = [run_trial(*job) for job in jobs]
    rates = {s: np.stack([o["rates"][s] for o in outs]) for s in cfg.schemes}
    beams = {s: np.stack([o["beams"][s] for o in outs]) for s in cfg.schemes}
    return ExperimentResult(cfg, rates, beams)
