"""Periodic Borel measures on the unit cell and their exact Fourier moments.

Supported measures are finite mixtures of two ingredients on the torus
[0,1)^3:

- normalized Lebesgue measure, and
- uniform surface measures on axis-parallel affine subspaces: a component
  freezes a subset F of the coordinate axes at given offsets and spreads
  Lebesgue measure over the remaining directions.  |F| = 1 gives a plane,
  |F| = 2 a line, |F| = 3 a point mass.

Each component is normalized to unit mass, so a mixture with weights w_c
has total mass sum(w_c).  The only quantity downstream code ever needs is
the trigonometric moment

    mu_hat(m) = integral of exp(-2 pi i m . y) dmu(y),   m in Z^3,

which is available in closed form for every supported component:

    mu_hat(m) = w * exp(-2 pi i sum_{k in F} m_k a_k) * prod_{j not in F} [m_j == 0].

Moment tables are therefore exact at any cutoff; there is no quadrature
anywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyMeasure, PropertyViolation

__all__ = [
    "MeasureComponent",
    "MeasureSpec",
    "MomentTable",
    "GradientMeanReport",
    "lebesgue",
    "plane_arrangement",
    "mixture",
    "normalize",
    "validate",
    "fourier_moments",
    "check_gradient_mean_zero",
    "measure_from_config",
    "measure_to_config",
]

_OFFSET_TOL = 1e-12


# ---------------------------------------------------------------------------
# specification types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MeasureComponent:
    """One mixture component: axes frozen at offsets, with a weight.

    ``frozen`` maps 0-based axis indices to offsets in [0, 1).  An empty
    mapping is the Lebesgue component.
    """

    frozen: tuple[tuple[int, float], ...]
    weight: float

    @property
    def frozen_axes(self) -> tuple[int, ...]:
        return tuple(a for a, _ in self.frozen)

    @property
    def offsets(self) -> dict[int, float]:
        return dict(self.frozen)

    @property
    def is_lebesgue(self) -> bool:
        return len(self.frozen) == 0

    def codimension(self) -> int:
        return len(self.frozen)


@dataclass(frozen=True)
class MeasureSpec:
    """A validated mixture of Lebesgue and axis-parallel surface measures."""

    kind: str  # 'lebesgue' | 'arrangement' | 'mixture'
    components: tuple[MeasureComponent, ...]
    total_mass: float = 1.0

    @property
    def is_normalized(self) -> bool:
        return abs(self.total_mass - 1.0) <= 1e-14

    @property
    def is_lebesgue(self) -> bool:
        return all(c.is_lebesgue for c in self.components)

    @property
    def active_axes(self) -> tuple[int, ...]:
        """Axes along which some moment with m != 0 can be nonzero."""
        axes: set[int] = set()
        for c in self.components:
            axes.update(c.frozen_axes)
        return tuple(sorted(axes))


def _component(frozen: dict[int, float] | None, weight: float) -> MeasureComponent:
    frozen = frozen or {}
    items = tuple(sorted((int(a), float(o)) for a, o in frozen.items()))
    return MeasureComponent(frozen=items, weight=float(weight))


def lebesgue() -> MeasureSpec:
    """Normalized Lebesgue measure on the unit cell."""
    return MeasureSpec(kind="lebesgue", components=(_component({}, 1.0),), total_mass=1.0)


def plane_arrangement(planes: list[tuple[dict[int, float], float]]) -> MeasureSpec:
    """Weighted arrangement of axis-parallel subspaces.

    ``planes`` lists (frozen_axes_to_offsets, weight) pairs; every entry must
    freeze at least one axis.  The result is validated but not normalized.
    """
    comps = tuple(_component(frozen, w) for frozen, w in planes)
    spec = MeasureSpec(kind="arrangement", components=comps,
                       total_mass=sum(c.weight for c in comps))
    validate(spec)
    return spec


def mixture(parts: list[tuple[dict[int, float] | None, float]]) -> MeasureSpec:
    """General mixture; a ``None`` or empty frozen dict denotes Lebesgue."""
    comps = tuple(_component(frozen, w) for frozen, w in parts)
    kind = "mixture" if any(c.is_lebesgue for c in comps) else "arrangement"
    if all(c.is_lebesgue for c in comps):
        kind = "lebesgue"
    spec = MeasureSpec(kind=kind, components=comps,
                       total_mass=sum(c.weight for c in comps))
    validate(spec)
    return spec


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _contained(inner: MeasureComponent, outer: MeasureComponent) -> bool:
    """True if the support of ``inner`` lies inside the support of ``outer``.

    The support of a component is the set where its frozen coordinates take
    their offsets, so containment holds iff outer freezes a subset of the
    inner axes with matching offsets.
    """
    inner_off = inner.offsets
    for axis, off in outer.frozen:
        if axis not in inner_off:
            return False
        if abs((inner_off[axis] - off + 0.5) % 1.0 - 0.5) > _OFFSET_TOL:
            return False
    return True


def validate(spec: MeasureSpec) -> None:
    """Check structural invariants; raise on violation.

    - at least one component, all weights positive, offsets in [0,1);
    - no singular component's support contained in another's (a contained
      sheet is redundant and breaks mixture weight accounting);
    - kind consistent with the component list.
    """
    if not spec.components:
        raise EmptyMeasure("measure has no components")
    for c in spec.components:
        if not (c.weight > 0.0) or not math.isfinite(c.weight):
            raise EmptyMeasure(f"component weight must be positive, got {c.weight}")
        axes = c.frozen_axes
        if len(set(axes)) != len(axes):
            raise ConfigError(f"repeated frozen axis in component {axes}")
        for axis, off in c.frozen:
            if axis not in (0, 1, 2):
                raise ConfigError(f"frozen axis {axis} outside 0..2")
            if not (0.0 <= off < 1.0):
                raise ConfigError(f"offset {off} outside [0, 1)")
    if not (spec.total_mass > 0.0):
        raise EmptyMeasure("total mass must be positive")
    if abs(spec.total_mass - sum(c.weight for c in spec.components)) > 1e-10 * max(1.0, spec.total_mass):
        raise PropertyViolation("total_mass does not match the sum of component weights")

    singular = [c for c in spec.components if not c.is_lebesgue]
    for i, ci in enumerate(singular):
        for j, cj in enumerate(singular):
            if i != j and _contained(ci, cj):
                raise PropertyViolation(
                    f"component {ci.frozen} is contained in component {cj.frozen}; "
                    "merge weights instead of nesting supports")

    has_leb = any(c.is_lebesgue for c in spec.components)
    has_sing = bool(singular)
    expected = "mixture" if (has_leb and has_sing) else ("lebesgue" if has_leb else "arrangement")
    if spec.kind != expected:
        raise ConfigError(f"kind {spec.kind!r} inconsistent with components (expected {expected!r})")


def normalize(spec: MeasureSpec) -> MeasureSpec:
    """Rescale weights so the measure is a probability measure."""
    validate(spec)
    total = sum(c.weight for c in spec.components)
    comps = tuple(MeasureComponent(frozen=c.frozen, weight=c.weight / total)
                  for c in spec.components)
    return MeasureSpec(kind=spec.kind, components=comps, total_mass=1.0)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def _axis_factor(component: MeasureComponent, axis: int, freqs: np.ndarray) -> np.ndarray:
    """Closed-form per-axis moment factor for one component."""
    off = component.offsets.get(axis)
    if off is None:
        # Lebesgue direction: integral of_0^1 exp(-2 pi i m y) dy = [m == 0]
        return (freqs == 0).astype(complex)
    return np.exp(-2j * np.pi * freqs * off)


def moment_array(spec: MeasureSpec, cutoffs: tuple[int, int, int],
                 period: int = 1) -> np.ndarray:
    """Exact moments mu_hat(m) on the centered grid m in prod [-c_j, c_j].

    With ``period = M > 1`` the array indexes supercell frequencies n for the
    cell [0, M)^3 carrying the periodized measure: the basis function is
    exp(2 pi i n . y / M), so the moment is mu_hat(n / M) when M divides n
    componentwise and 0 otherwise.
    """
    c1, c2, c3 = cutoffs
    f1, f2, f3 = (np.arange(-c, c + 1) for c in (c1, c2, c3))
    out = np.zeros((2 * c1 + 1, 2 * c2 + 1, 2 * c3 + 1), dtype=complex)
    if period != 1:
        m1, m2, m3 = (f[np.abs(f) % period == 0] // period for f in (f1, f2, f3))
        sub = moment_array(spec, (int(m1.max(initial=0)), int(m2.max(initial=0)),
                                  int(m3.max(initial=0))))
        sel1, sel2, sel3 = (np.flatnonzero(np.abs(f) % period == 0) for f in (f1, f2, f3))
        out[np.ix_(sel1, sel2, sel3)] = sub
        return out
    for comp in spec.components:
        a1 = _axis_factor(comp, 0, f1)
        a2 = _axis_factor(comp, 1, f2)
        a3 = _axis_factor(comp, 2, f3)
        out += comp.weight * np.einsum("i,j,k->ijk", a1, a2, a3)
    return out


@dataclass
class MomentTable:
    """Moments of a measure out to twice a field cutoff.

    A Galerkin pairing of two fields truncated at cutoff N consumes moments
    at frequency differences up to 2N per axis, so the table stores the
    centered block m in [-2N, 2N]^3.  Entries are exact.
    """

    cutoff: int
    entries: np.ndarray = field(repr=False)

    @property
    def moment_cutoff(self) -> int:
        return 2 * self.cutoff

    def moment(self, m: tuple[int, int, int]) -> complex:
        c = self.moment_cutoff
        if any(abs(mi) > c for mi in m):
            raise KeyError(f"moment index {m} outside stored range [-{c}, {c}]^3")
        return complex(self.entries[m[0] + c, m[1] + c, m[2] + c])

    def to_dict(self) -> dict:
        c = self.moment_cutoff
        nz = {}
        floor = 1e-14 * max(1.0, float(np.abs(self.entries).max()))
        it = np.nditer(self.entries, flags=["multi_index"])
        for v in it:
            if abs(v) > floor:
                i, j, k = it.multi_index
                nz[f"{i - c},{j - c},{k - c}"] = [float(v.real), float(v.imag)]
        return {"cutoff": self.cutoff, "moment_cutoff": c, "nonzero": nz}


def fourier_moments(spec: MeasureSpec, cutoff: int) -> MomentTable:
    """Moment table for fields truncated at ``cutoff`` (see MomentTable)."""
    if cutoff < 1:
        raise ConfigError("cutoff must be at least 1")
    validate(spec)
    if not spec.is_normalized:
        raise PropertyViolation("moment tables require a normalized measure")
    c = 2 * cutoff
    return MomentTable(cutoff=cutoff, entries=moment_array(spec, (c, c, c)))


# ---------------------------------------------------------------------------
# gradient mean diagnostic
# ---------------------------------------------------------------------------

@dataclass
class GradientMeanReport:
    """Result of the zero-gradient-mean check on a band of trial modes.

    The identity tested is integral of d_j exp(2 pi i m . y) dmu = 0 for all m in
    the band and all axes j; by the moment formula the left side equals
    2 pi i m_j mu_hat(-m), so the worst violation is
    max |2 pi m_j mu_hat(-m)| over m != 0 in the band.
    """

    holds: bool
    worst_violation: float
    worst_index: tuple[int, int, int]
    worst_axis: int
    cutoff: int
    tol: float

    def to_dict(self) -> dict:
        return {
            "holds": bool(self.holds),
            "worst_violation": float(self.worst_violation),
            "worst_index": list(self.worst_index),
            "worst_axis": int(self.worst_axis),
            "cutoff": int(self.cutoff),
            "tol": float(self.tol),
        }


def check_gradient_mean_zero(spec: MeasureSpec, cutoff: int,
                             tol: float = 1e-12) -> GradientMeanReport:
    """Report whether gradients of band-limited modes have zero mean.

    Lebesgue measure satisfies this exactly (all nonzero moments vanish).
    Singular measures generally do not: any nonzero moment mu_hat(-m) with
    m != 0 contributes a violation 2 pi |m_j| |mu_hat(-m)| on each frozen
    axis j, which is the quantitative obstruction the report carries.
    """
    validate(spec)
    c = cutoff
    arr = moment_array(spec, (c, c, c))
    f = np.arange(-c, c + 1)
    m1, m2, m3 = np.meshgrid(f, f, f, indexing="ij")
    worst = 0.0
    worst_idx = (0, 0, 0)
    worst_axis = 0
    for axis, m in enumerate((m1, m2, m3)):
        viol = 2.0 * np.pi * np.abs(m) * np.abs(arr[::-1, ::-1, ::-1])
        k = np.unravel_index(int(np.argmax(viol)), viol.shape)
        if viol[k] > worst:
            worst = float(viol[k])
            worst_idx = (int(f[k[0]]), int(f[k[1]]), int(f[k[2]]))
            worst_axis = axis
    return GradientMeanReport(holds=worst <= tol, worst_violation=worst,
                              worst_index=worst_idx, worst_axis=worst_axis,
                              cutoff=cutoff, tol=tol)


# ---------------------------------------------------------------------------
# configuration round trip
# ---------------------------------------------------------------------------

_COMPONENT_KEYS = {"frozen_axes", "offsets", "weight"}
_MEASURE_KEYS = {"kind", "components"}


def measure_from_config(doc: dict) -> MeasureSpec:
    """Build a normalized measure from a configuration mapping.

    Schema (axes are 1-based in configuration files)::

        {"kind": "lebesgue"}
        {"kind": "arrangement" | "mixture",
         "components": [
             {"frozen_axes": [3], "offsets": [0.25], "weight": 1.0},
             {"weight": 1.0}                       # Lebesgue part of a mixture
         ]}

    Unknown keys are rejected so misspelled fields fail loudly, and the
    result is always normalized to unit mass.
    """
    if not isinstance(doc, dict):
        raise ConfigError("measure config must be a mapping")
    unknown = set(doc) - _MEASURE_KEYS
    if unknown:
        raise ConfigError(f"unknown measure keys: {sorted(unknown)}")
    kind = doc.get("kind")
    if kind == "lebesgue":
        if "components" in doc:
            raise ConfigError("lebesgue measure takes no components")
        return lebesgue()
    if kind not in ("arrangement", "mixture"):
        raise ConfigError(f"unknown measure kind {kind!r}")
    comps_doc = doc.get("components")
    if not isinstance(comps_doc, list) or not comps_doc:
        raise ConfigError("components must be a nonempty list")
    parts: list[tuple[dict[int, float] | None, float]] = []
    for entry in comps_doc:
        if not isinstance(entry, dict):
            raise ConfigError("each component must be a mapping")
        unknown = set(entry) - _COMPONENT_KEYS
        if unknown:
            raise ConfigError(f"unknown component keys: {sorted(unknown)}")
        axes = entry.get("frozen_axes", [])
        offs = entry.get("offsets", [])
        if len(axes) != len(offs):
            raise ConfigError("frozen_axes and offsets must have equal length")
        frozen: dict[int, float] = {}
        for a, o in zip(axes, offs):
            if not isinstance(a, int) or not (1 <= a <= 3):
                raise ConfigError(f"frozen axis {a!r} must be 1, 2 or 3")
            if a - 1 in frozen:
                raise ConfigError(f"axis {a} frozen twice in one component")
            frozen[a - 1] = float(o)
        if "weight" not in entry:
            raise ConfigError("component missing weight")
        parts.append((frozen or None, float(entry["weight"])))
    spec = mixture(parts)
    if spec.kind != kind:
        raise ConfigError(f"kind {kind!r} inconsistent with components (expected {spec.kind!r})")
    return normalize(spec)


def measure_to_config(spec: MeasureSpec) -> dict:
    """Inverse of measure_from_config (axes back to 1-based)."""
    if spec.is_lebesgue and len(spec.components) == 1:
        return {"kind": "lebesgue"}
    comps = []
    for c in spec.components:
        entry: dict = {"weight": c.weight}
        if not c.is_lebesgue:
            entry["frozen_axes"] = [a + 1 for a in c.frozen_axes]
            entry["offsets"] = [c.offsets[a] for a in c.frozen_axes]
        comps.append(entry)
    return {"kind": spec.kind, "components": comps}
