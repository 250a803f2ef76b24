"""Run configuration: one JSON document, canonical serialisation, digest."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .collision import CollisionModel, VelocityQuadrature
from .errors import ConfigError
from .geometry.domains import TOL_ROOT, domain_from_spec
from .transport import BoundaryData

DEFAULT_BUDGETS = {
    "geometry_samples": 100000,   # exit records for the ray inequalities
    "chord_samples": 10000,       # chords, planar configurations
    "mc_samples": 200000,         # volume / distance integrals
    "surface_samples": 20000,
    "curvature_configs": 200,
    "cov_samples": 10000,
    "sk_samples": 200,
    "seminorm_samples": 200000,   # g0 row of the sweep; other rows are scaled down
    "picard_budget_scale": 0.06,
    "trend_samples": 8000,
    "equivalence_samples": 20000,
    "quad_nodes": [32, 32, 16],   # apply_K rule (n_r, n_mu, n_phi)
    "sweep_quad_nodes": [8, 8, 6],
    "chord_nodes": 6,
    "iterate_quad_nodes": [4, 4, 2],  # g3 tables need a coarse rule
    "iterate_chord_nodes": 4,
    "iterate_points": 5,
    "vmax": 8.0,
    "grid": 64,
    "shell_floor_exp": 30,        # sweep shell floor 2^-30 diam
    "node_budget": 2e8,
}
SAMPLE_KEYS = ("geometry_samples", "chord_samples", "mc_samples", "surface_samples", "curvature_configs",
               "cov_samples", "sk_samples", "seminorm_samples", "trend_samples", "equivalence_samples")
TOP_KEYS = {"domain", "collision", "boundary", "budgets", "seed", "output_dir", "tol_root", "s_list", "checks",
            "workers", "sweep_terms"}
SWEEP_TERMS = ("g0", "g1", "g2", "zext")


@dataclass
class RunConfig:
    """Everything that determines a run.

    ``output_dir`` and ``workers`` do not enter :attr:`config_hash`: they
    change where results go and how fast, never what they are.
    """

    domain: dict = field(default_factory=lambda: {"kind": "ball", "params": [1.0], "center": [0.0, 0.0, 0.0]})
    collision: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=lambda: {"kind": "lipschitz_bump", "a": 0.1, "C": 1.0})
    budgets: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "kinlab_out"
    tol_root: float = TOL_ROOT
    s_list: list = field(default_factory=lambda: [0.3, 0.5, 0.7, 0.9])
    checks: list | None = None
    workers: int = 1
    sweep_terms: list = field(default_factory=lambda: ["g0", "g1"])

    def __post_init__(self):
        self.budgets = {**DEFAULT_BUDGETS, **dict(self.budgets)}
        self.validate()

    # -- validation -------------------------------------------------------
    def validate(self):
        unknown = set(self.budgets) - set(DEFAULT_BUDGETS)
        if unknown:
            raise ConfigError(f"unknown budget keys {sorted(unknown)}")
        for k, v in self.budgets.items():
            vals = v if isinstance(v, (list, tuple)) else [v]
            if not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in vals):
                raise ConfigError(f"budget {k!r} must be positive")
        if any(len(self.budgets[k]) != 3 for k in ("quad_nodes", "sweep_quad_nodes", "iterate_quad_nodes")):
            raise ConfigError("quadrature node budgets are [n_r, n_mu, n_phi]")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be a positive integer")
        if not 0 < float(self.tol_root) < 1:
            raise ConfigError("tol_root must lie in (0, 1)")
        s = [float(x) for x in self.s_list]
        if not s or any(not 0 < x < 1 for x in s):
            raise ConfigError("s_list entries must lie in (0, 1)")
        bad = [t for t in self.sweep_terms if t not in SWEEP_TERMS]
        if bad:
            raise ConfigError(f"unknown sweep terms {bad}")
        try:
            self.build_domain()
            self.build_model()
            self.build_boundary()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # -- builders ---------------------------------------------------------
    def build_domain(self):
        return domain_from_spec(self.domain).with_tolerance(float(self.tol_root))

    def build_model(self) -> CollisionModel:
        spec = dict(self.collision)
        spec.setdefault("vmax", self.budgets["vmax"])
        return CollisionModel.from_spec(spec)

    def build_boundary(self) -> BoundaryData:
        return BoundaryData.from_spec(self.boundary)

    def build_quadrature(self, key: str = "quad_nodes") -> VelocityQuadrature:
        n_r, n_mu, n_phi = (int(n) for n in self.budgets[key])
        return VelocityQuadrature(vmax=float(self.budgets["vmax"]), n_r=n_r, n_mu=n_mu, n_phi=n_phi)

    # -- serialisation ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"domain": self.domain, "collision": self.collision, "boundary": self.boundary,
                "budgets": self.budgets, "seed": self.seed, "output_dir": self.output_dir,
                "tol_root": float(self.tol_root), "s_list": [float(x) for x in self.s_list],
                "checks": self.checks, "workers": self.workers, "sweep_terms": list(self.sweep_terms)}

    def canonical(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        # resolve implied values so equivalent configs hash alike
        d["domain"] = self.build_domain().to_json()
        d["collision"] = self.build_model().to_json()
        d["boundary"] = self.build_boundary().to_json()
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def with_overrides(self, seed: int | None = None, budget_scale: float | None = None,
                       output_dir: str | None = None, workers: int | None = None) -> "RunConfig":
        """Copy with the command-line overrides applied."""
        d = self.to_dict()
        if seed is not None:
            d["seed"] = int(seed)
        if output_dir is not None:
            d["output_dir"] = str(output_dir)
        if workers is not None:
            d["workers"] = int(workers)
        if budget_scale is not None:
            if budget_scale <= 0:
                raise ConfigError("budget scale must be positive")
            b = dict(d["budgets"])
            for k in SAMPLE_KEYS:
                b[k] = max(1, int(round(b[k] * budget_scale)))
            d["budgets"] = b
        return RunConfig.from_dict(d)
