"""Fixed points, Jacobians and local stability of the map.

Stability of a 2x2 Jacobian is read from the trace/determinant conditions

    i   = 1 + tr J + det J      (> 0, else an eigenvalue crossed -1: flip)
    ii  = 1 - tr J + det J      (> 0, else an eigenvalue crossed +1: fold)
    iii = 1 - det J             (> 0, else a complex pair left the circle: NS)

and of a 3x3 Jacobian from the characteristic polynomial
``l**3 + a l**2 + b l + c`` through

    c1 = 1 + a + b + c,  c2 = 1 - a + b - c,  c3 = 1 - b + a c - c**2,  c4 = 3 - b.

At P2/P3 of the 2D map, condition ``i`` equals the closed form ``A`` and
``iii`` equals ``B``; both are reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import SCALAR_FIELDS, ModelParams, ParameterError, gamma, trade_multiplier_growth

BOUNDARY_TOL = 1e-10

STABLE = "stable"
UNSTABLE = "unstable"
SADDLE = "saddle"
BOUNDARY_FLIP = "boundary_flip"
BOUNDARY_NS = "boundary_ns"
BOUNDARY_FOLD = "boundary_fold"

# which eigenvalue crossing each condition guards against
_KIND_2D = {"i": "flip", "ii": "fold", "iii": "ns"}
_KIND_3D = {"c1": "fold", "c2": "flip", "c3": "ns", "c4": "ns"}
_BOUNDARY = {"flip": BOUNDARY_FLIP, "fold": BOUNDARY_FOLD, "ns": BOUNDARY_NS}


@dataclass
class Equilibrium:
    label: str
    e_bar: float
    dy_bar: float
    jacobian: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    conditions: dict[str, float] = field(default_factory=dict)
    classification: str | None = None
    diagnostic: str | None = None

    @property
    def point(self) -> tuple[float, float]:
        return (self.e_bar, self.dy_bar)

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "e_bar": self.e_bar,
            "dy_bar": self.dy_bar,
            "jacobian": None if self.jacobian is None else self.jacobian.tolist(),
            "eigenvalues": None if self.eigenvalues is None
            else [[float(v.real), float(v.imag)] for v in self.eigenvalues],
            "conditions": dict(self.conditions),
            "classification": self.classification,
            "diagnostic": self.diagnostic,
        }


def equilibria(params: ModelParams) -> list[Equilibrium]:
    """All fixed points with their stability analysis.

    P1 sits on the expected fundamental and always exists.  P2 and P3 are the
    chartist-induced pair ``e1 +/- sqrt(wC/wF)`` and exist only when both
    shares are positive; with ``wF == 0 < wC`` the pair is undefined and P1
    carries a diagnostic instead.
    """
    dy_bar = trade_multiplier_growth(params)
    e1 = -params.Omega * dy_bar
    points = [Equilibrium("P1", e1, dy_bar)]
    if params.wC > 0 and params.wF > 0:
        offset = math.sqrt(params.wC / params.wF)
        points.append(Equilibrium("P2", e1 + offset, dy_bar))
        points.append(Equilibrium("P3", e1 - offset, dy_bar))
    elif params.wC > 0:
        points[0].diagnostic = "no fundamentalists (wF = 0): P2/P3 undefined"
    return [stability(params, eq) for eq in points]


def jacobian_at(params: ModelParams, point: Sequence[float], dim: int | None = None) -> np.ndarray:
    """Analytic Jacobian of :func:`fxgrowth.core.step` with a zero shock.

    ``point`` is ``(e, dy)`` (the lag is then taken equal to ``e``, as at any
    fixed point) or ``(e, dy, e_prev)``.  The result is 2x2 when the map has
    no extrapolators and 3x3 in the ``(e, dy, e_prev)`` coordinates
    otherwise; ``dim=3`` forces the 3x3 embedding.
    """
    if dim is None:
        dim = 3 if params.is_3d else 2
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3")
    e, dy = float(point[0]), float(point[1])
    gap = -e - params.Omega * dy
    g2 = gap * gap
    reaction = params.mu + params.rho
    k = params.wflex * params.beta
    gam = gamma(params)

    ds_de = -3.0 * params.wF * g2 + params.wC + params.wE
    ds_ddy = params.Omega * (-3.0 * params.wF * g2 + params.wC)
    ds_dlag = -params.wE

    j11 = 1.0 + reaction * ds_de
    j12 = reaction * ds_ddy
    j21 = -k * gam * ds_de
    j22 = 1.0 - k - k * gam * ds_ddy
    if dim == 2:
        if params.wE != 0.0:
            raise ValueError("the 2x2 Jacobian is only defined without extrapolators")
        return np.array([[j11, j12], [j21, j22]])
    j13 = reaction * ds_dlag
    j23 = -k * gam * ds_dlag
    return np.array([[j11, j12, j13], [j21, j22, j23], [1.0, 0.0, 0.0]])


def cubic_coefficients(jac: np.ndarray) -> tuple[float, float, float]:
    """``(a, b, c)`` of ``det(l I - J) = l**3 + a l**2 + b l + c``.

    ``b`` is the sum of the three principal 2x2 minors and ``c = -det J``.
    """
    j = jac
    a = -(j[0, 0] + j[1, 1] + j[2, 2])
    b = (
        (j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1])
        + (j[0, 0] * j[2, 2] - j[0, 2] * j[2, 0])
        + (j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0])
    )
    det = (
        j[0, 0] * (j[1, 1] * j[2, 2] - j[1, 2] * j[2, 1])
        - j[0, 1] * (j[1, 0] * j[2, 2] - j[1, 2] * j[2, 0])
        + j[0, 2] * (j[1, 0] * j[2, 1] - j[1, 1] * j[2, 0])
    )
    return float(a), float(b), float(-det)


def trace_det_conditions(jac: np.ndarray) -> dict[str, float]:
    tr = float(jac[0, 0] + jac[1, 1])
    det = float(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    return {"i": 1.0 + tr + det, "ii": 1.0 - tr + det, "iii": 1.0 - det}


def cubic_conditions(jac: np.ndarray) -> dict[str, float]:
    a, b, c = cubic_coefficients(jac)
    return {
        "c1": 1.0 + a + b + c,
        "c2": 1.0 - a + b - c,
        "c3": 1.0 - b + a * c - c * c,
        "c4": 3.0 - b,
    }


def flip_margin(params: ModelParams) -> float:
    """Closed form of condition ``i`` at P2/P3 of the 2D map (``A``)."""
    s = params.mu + params.rho
    k = params.wflex * params.beta
    return 4.0 - 4.0 * s * params.wC + 2.0 * ((s + 2.0 * gamma(params) * params.Omega) * params.wC - 1.0) * k


def ns_margin(params: ModelParams) -> float:
    """Closed form of condition ``iii`` at P2/P3 of the 2D map (``B``)."""
    s = params.mu + params.rho
    k = params.wflex * params.beta
    return (1.0 - 2.0 * gamma(params) * params.Omega * params.wC) * k + 2.0 * s * params.wC * (1.0 - k)


def closed_form_fold_factor(params: ModelParams) -> float:
    """``1 - Omega * wE * (1 + gamma)``.

    This is the factor that multiplies ``c1`` at P2/P3 when the lag entry
    of the output equation is taken as ``-wflex*beta*wE``.  The exact
    Jacobian has ``+wflex*beta*gamma*wE`` there, which makes ``c1`` at P2/P3
    equal to ``2 (mu+rho) wC wflex beta`` for any ``wE``; classification
    always uses the exact Jacobian.
    """
    return 1.0 - params.Omega * params.wE * (1.0 + gamma(params))


def stability(params: ModelParams, eq: Equilibrium, tol: float = BOUNDARY_TOL) -> Equilibrium:
    """Fill in Jacobian, eigenvalues, conditions and classification of ``eq``."""
    jac = jacobian_at(params, eq.point)
    eigenvalues = np.linalg.eigvals(jac)
    if jac.shape == (2, 2):
        conditions = trace_det_conditions(jac)
        kinds = _KIND_2D
        if eq.label in ("P2", "P3"):
            conditions["A"] = flip_margin(params)
            conditions["B"] = ns_margin(params)
    else:
        conditions = cubic_conditions(jac)
        kinds = _KIND_3D

    classification = classify(conditions, kinds, eigenvalues, tol)
    diagnostic = eq.diagnostic
    radius = float(np.max(np.abs(eigenvalues)))
    if (classification == STABLE) != (radius < 1.0) and abs(radius - 1.0) > 1e-8:
        note = f"sign conditions ({classification}) disagree with spectral radius {radius:.12g}"
        diagnostic = note if diagnostic is None else f"{diagnostic}; {note}"
    return replace(
        eq,
        jacobian=jac,
        eigenvalues=eigenvalues,
        conditions=conditions,
        classification=classification,
        diagnostic=diagnostic,
    )


def classify(
    conditions: dict[str, float],
    kinds: dict[str, str],
    eigenvalues: np.ndarray,
    tol: float = BOUNDARY_TOL,
) -> str:
    values = {name: conditions[name] for name in kinds}
    if all(v > tol for v in values.values()):
        return STABLE
    violated = [name for name, v in values.items() if v < -tol]
    if not violated:
        # every failing condition sits inside the boundary band
        near = next(name for name, v in values.items() if abs(v) <= tol)
        return _BOUNDARY[kinds[near]]
    moduli = np.abs(eigenvalues)
    if np.any(moduli > 1.0) and np.any(moduli < 1.0):
        return SADDLE
    return UNSTABLE


def margins(conditions: dict[str, float]) -> dict[str, float]:
    """Dimension-free view: fold / flip / Neimark-Sacker margins (> 0 is safe)."""
    if "c1" in conditions:
        return {
            "fold": conditions["c1"],
            "flip": conditions["c2"],
            "ns": min(conditions["c3"], conditions["c4"]),
        }
    return {"fold": conditions["ii"], "flip": conditions["i"], "ns": conditions["iii"]}


def outer_equilibrium(params: ModelParams) -> Equilibrium | None:
    """P2 (P3 has identical conditions by symmetry), or None when absent."""
    for eq in equilibria(params):
        if eq.label == "P2":
            return eq
    return None


def condition_surface(params: ModelParams, free: str) -> Callable[[float], dict[str, float]]:
    """Evaluator ``value -> conditions at P2/P3`` along one parameter.

    Strategy shares are kept on the simplex as in
    :meth:`ModelParams.with_value`.  Values where P2/P3 do not exist map to
    an empty dict.
    """
    if free not in SCALAR_FIELDS and free != "wflex_beta":
        raise ParameterError(free, "unknown parameter")

    def evaluate(value: float) -> dict[str, float]:
        eq = outer_equilibrium(params.with_value(free, value))
        return {} if eq is None else dict(eq.conditions)

    return evaluate
