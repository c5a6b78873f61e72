"""Time-series containers and the per-target regression problem.

One target node at a time is regressed on T lagged values of every
candidate parent signal (the p measured nodes followed by the m inputs).
The response stacks the newest sample first:

    Y = [y_i(N), ..., y_i(T+1)]'
    row r of Phi, group g:  [g(t_r - 1), ..., g(t_r - T)]   with t_r = N - r

Dropping a candidate group deletes its T-column block; nothing else moves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import DataTooShortError, UsageError

MAX_ENUMERATION_BITS = 20


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSeriesExperiment:
    """One experiment: p node trajectories, m input trajectories, a label."""

    nodes: np.ndarray
    inputs: np.ndarray
    label: str = ""

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=np.float64))
        if nodes.ndim != 2 or nodes.shape[0] < 1:
            raise UsageError("nodes must be a (p, N) array with p >= 1")
        inputs = np.asarray(self.inputs, dtype=np.float64)
        if inputs.size == 0:
            inputs = np.zeros((0, nodes.shape[1]))
        inputs = np.atleast_2d(inputs)
        if inputs.shape[1] != nodes.shape[1]:
            raise UsageError(
                f"inputs length {inputs.shape[1]} != nodes length {nodes.shape[1]}"
            )
        object.__setattr__(self, "nodes", _freeze(nodes))
        object.__setattr__(self, "inputs", _freeze(inputs))

    @property
    def p(self) -> int:
        return self.nodes.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[0]

    @property
    def length(self) -> int:
        return self.nodes.shape[1]

    def series(self, group: int) -> np.ndarray:
        """Signal of candidate group ``group`` (nodes first, then inputs)."""
        if group < self.p:
            return self.nodes[group]
        return self.inputs[group - self.p]


@dataclass(frozen=True)
class ModelStructure:
    """Boolean parent set for one target node; the self group is pinned on."""

    target: int
    parents: tuple

    def __post_init__(self):
        parents = tuple(bool(x) for x in self.parents)
        if not 0 <= self.target < len(parents):
            raise UsageError(f"target {self.target} outside 0..{len(parents) - 1}")
        if not parents[self.target]:
            raise UsageError("the target's own autoregressive group must be present")
        object.__setattr__(self, "parents", parents)

    @property
    def n_groups(self) -> int:
        return len(self.parents)

    @property
    def m_links(self) -> int:
        return sum(self.parents)

    @property
    def active(self) -> tuple:
        return tuple(i for i, on in enumerate(self.parents) if on)

    def bits(self) -> int:
        return sum(1 << i for i, on in enumerate(self.parents) if on)

    def with_group(self, g: int) -> "ModelStructure":
        if self.parents[g]:
            raise UsageError(f"group {g} already present")
        parents = list(self.parents)
        parents[g] = True
        return ModelStructure(self.target, tuple(parents))

    def without_group(self, g: int) -> "ModelStructure":
        if g == self.target:
            raise UsageError("cannot remove the self group")
        if not self.parents[g]:
            raise UsageError(f"group {g} not present")
        parents = list(self.parents)
        parents[g] = False
        return ModelStructure(self.target, tuple(parents))


def full_structure(p: int, m: int, target: int) -> ModelStructure:
    return ModelStructure(target, tuple([True] * (p + m)))


def structure_from_bits(bits: int, n_groups: int, target: int) -> ModelStructure:
    return ModelStructure(target, tuple(bool(bits >> i & 1) for i in range(n_groups)))


def structure_space_size(p: int, m: int) -> int:
    """Number of admissible parent sets: 2^(p+m-1) (self group pinned)."""
    if p < 1 or m < 0:
        raise UsageError("need p >= 1 and m >= 0")
    return 2 ** (p + m - 1)


def enumerate_structures(p: int, m: int, target: int) -> Iterator[ModelStructure]:
    """Yield every admissible structure in deterministic counting order."""
    n = p + m
    if n - 1 > MAX_ENUMERATION_BITS:
        raise UsageError(
            f"structure space 2^{n - 1} too large to enumerate (limit 2^{MAX_ENUMERATION_BITS})"
        )
    others = [i for i in range(n) if i != target]
    for mask in range(2 ** len(others)):
        parents = [False] * n
        parents[target] = True
        for k, idx in enumerate(others):
            if mask >> k & 1:
                parents[idx] = True
        yield ModelStructure(target, tuple(parents))


def _lag_matrix(series: np.ndarray, T: int) -> np.ndarray:
    """(N-T, T) matrix with row r = [s(t_r - 1), ..., s(t_r - T)], t_r = N - r."""
    N = series.shape[0]
    rows = np.arange(N - T)
    cols = np.arange(T)
    return series[(N - 2 - rows)[:, None] - cols[None, :]]


@dataclass
class RegressionProblem:
    """Stacked lag-regression data for one target node and one structure."""

    structure: ModelStructure
    T: int
    Y: list
    Phi: list
    labels: tuple
    p: int
    m: int
    _grams: list = field(default=None, repr=False)
    _cross: list = field(default=None, repr=False)
    _yty: np.ndarray = field(default=None, repr=False)
    _subsets: dict = field(default_factory=dict, repr=False)

    @property
    def n_experiments(self) -> int:
        return len(self.Y)

    @property
    def nrows(self) -> tuple:
        return tuple(y.shape[0] for y in self.Y)

    @property
    def n_groups(self) -> int:
        return self.structure.m_links

    @property
    def dim(self) -> int:
        return self.T * self.n_groups

    @property
    def groups(self) -> tuple:
        """Candidate-group index for each column block, in order."""
        return self.structure.active

    def _ensure_cache(self):
        if self._grams is None:
            self._grams = [np.ascontiguousarray(P.T @ P) for P in self.Phi]
            self._cross = [P.T @ y for P, y in zip(self.Phi, self.Y)]
            self._yty = np.array([float(y @ y) for y in self.Y])

    def grams(self) -> list:
        self._ensure_cache()
        return self._grams

    def cross(self) -> list:
        self._ensure_cache()
        return self._cross

    def yty(self) -> np.ndarray:
        self._ensure_cache()
        return self._yty

    def subset(self, structure: ModelStructure) -> "RegressionProblem":
        """Problem restricted to a sub-structure (column-block deletion).

        Results are memoized per structure so samplers revisiting a topology
        pay the slicing cost once.
        """
        if structure.parents == self.structure.parents:
            return self
        key = structure.bits()
        hit = self._subsets.get(key)
        if hit is not None:
            return hit
        mine = set(self.groups)
        if not set(structure.active) <= mine:
            raise UsageError("sub-structure contains groups absent from this problem")
        if structure.target != self.structure.target:
            raise UsageError("sub-structure targets a different node")
        block_of = {g: b for b, g in enumerate(self.groups)}
        cols = np.concatenate(
            [np.arange(block_of[g] * self.T, (block_of[g] + 1) * self.T) for g in structure.active]
        )
        self._ensure_cache()
        sub = RegressionProblem(
            structure=structure,
            T=self.T,
            Y=self.Y,
            Phi=[np.ascontiguousarray(P[:, cols]) for P in self.Phi],
            labels=self.labels,
            p=self.p,
            m=self.m,
        )
        sub._grams = [np.ascontiguousarray(G[np.ix_(cols, cols)]) for G in self._grams]
        sub._cross = [v[cols] for v in self._cross]
        sub._yty = self._yty
        if len(self._subsets) > 4096:
            self._subsets.clear()
        self._subsets[key] = sub
        return sub


def build_regression(
    experiments: Sequence[TimeSeriesExperiment], structure: ModelStructure, T: int
) -> RegressionProblem:
    """Assemble Y and Phi for every experiment under the given structure."""
    if not experiments:
        raise UsageError("need at least one experiment")
    if T < 1:
        raise UsageError("T must be >= 1")
    p, m = experiments[0].p, experiments[0].m
    if structure.n_groups != p + m:
        raise UsageError(
            f"structure covers {structure.n_groups} groups but experiments have {p + m}"
        )
    if structure.m_links == 0:
        raise UsageError("structure has no active groups")
    if structure.target >= p:
        raise UsageError("target must index a measured node")
    Ys, Phis = [], []
    for exp in experiments:
        if exp.p != p or exp.m != m:
            raise UsageError("experiments disagree on node/input counts")
        if exp.length <= T:
            raise DataTooShortError(
                f"experiment {exp.label!r} has {exp.length} samples; need > T={T}"
            )
        y = exp.nodes[structure.target]
        Ys.append(np.ascontiguousarray(y[: T - 1 : -1]))
        Phis.append(
            np.ascontiguousarray(
                np.hstack([_lag_matrix(exp.series(g), T) for g in structure.active])
            )
        )
    return RegressionProblem(
        structure=structure,
        T=int(T),
        Y=Ys,
        Phi=Phis,
        labels=tuple(e.label for e in experiments),
        p=p,
        m=m,
    )
