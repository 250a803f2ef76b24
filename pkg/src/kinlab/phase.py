"""Evaluable phase-space fields ``f(x, v)``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SUPPORTS = ("omega", "whole_space")
PROVENANCES = ("closed_form", "operator_composition", "tabulated")


@dataclass(frozen=True)
class PhaseFunction:
    """A field ``f(x, v)`` evaluated on broadcast arrays of shape ``(..., 3)``.

    ``support='omega'`` marks a function defined on the domain; its
    :meth:`zero_extended` version is a whole-space function that returns 0
    outside ``domain``.  ``separable`` optionally records a factorisation
    ``f = a(x) b(v)`` as ``(a, b)`` for operators that can exploit it;
    ``radial_v`` marks a velocity factor that depends on ``|v|`` only.
    """

    evaluator: Callable
    support: str = "omega"
    provenance: str = "closed_form"
    domain: Optional[object] = None
    separable: Optional[tuple] = field(default=None, compare=False)
    label: str = ""
    radial_v: bool = False

    def __post_init__(self):
        if self.support not in SUPPORTS:
            raise ValueError(f"support must be one of {SUPPORTS}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")

    def __call__(self, x, v):
        x, v = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(v, dtype=float))
        shape = x.shape[:-1]
        out = self.evaluator(x.reshape(-1, 3), v.reshape(-1, 3))
        return np.asarray(out, dtype=float).reshape(shape)

    def zero_extended(self, domain=None) -> "PhaseFunction":
        """Whole-space extension by zero outside ``domain``."""
        dom = domain if domain is not None else self.domain
        if dom is None:
            raise ValueError("zero extension needs a domain")
        inner = self.evaluator

        def ev(x, v):
            out = np.zeros(x.shape[0])
            inside = dom.phi(x) < 0
            if inside.any():
                out[inside] = inner(x[inside], v[inside])
            return out

        sep = None
        if self.separable is not None:
            a, b = self.separable
            sep = (lambda x: np.where(dom.phi(x) < 0, a(x), 0.0), b)
        return PhaseFunction(ev, "whole_space", self.provenance, dom, sep, label=f"Z({self.label})",
                             radial_v=self.radial_v)

    def scaled(self, c: float) -> "PhaseFunction":
        inner = self.evaluator
        sep = None
        if self.separable is not None:
            a, b = self.separable
            sep = (lambda x: c * a(x), b)
        return PhaseFunction(lambda x, v: c * inner(x, v), self.support, self.provenance, self.domain, sep,
                             label=f"{c}*{self.label}", radial_v=self.radial_v)

    def __add__(self, other: "PhaseFunction") -> "PhaseFunction":
        a, b = self.evaluator, other.evaluator
        return PhaseFunction(lambda x, v: a(x, v) + b(x, v), self.support, "operator_composition",
                             self.domain or other.domain, label=f"({self.label}+{other.label})")


def constant(c: float, support: str = "omega", domain=None) -> PhaseFunction:
    c = float(c)
    return PhaseFunction(lambda x, v: np.full(x.shape[0], c), support, "closed_form", domain,
                         (lambda x: np.full(x.shape[0], c), lambda v: np.ones(v.shape[0])), label=str(c),
                         radial_v=True)


def separable(a: Callable, b: Callable, support: str = "omega", domain=None, label: str = "",
              radial_v: bool = False) -> PhaseFunction:
    """``f(x, v) = a(x) b(v)`` with the factorisation recorded."""
    return PhaseFunction(lambda x, v: a(x) * b(v), support, "closed_form", domain, (a, b), label=label,
                         radial_v=radial_v)


def gaussian_velocity(a: float):
    return lambda v: np.exp(-a * np.einsum("ij,ij->i", v, v))


def smooth_bump(center=(0.0, 0.0, 0.0), width: float = 0.5):
    """C-infinity bump ``exp(1 - 1/(1 - |x-c|^2/w^2))`` supported in ``|x - c| < w``."""
    c = np.asarray(center, dtype=float)

    def b(x):
        r2 = np.sum((x - c) ** 2, axis=-1) / width**2
        out = np.zeros(r2.shape)
        m = r2 < 1
        out[m] = np.exp(1.0 - 1.0 / (1.0 - r2[m]))
        return out

    return b
