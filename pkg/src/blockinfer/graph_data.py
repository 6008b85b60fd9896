"""Observed network: value matrices, edge covariates and structure flags.

Values are always stored as a ``(p, n1, n2)`` float array and covariates as a
``(c, n1, n2)`` array, so univariate networks have ``p == 1`` and networks
without covariates have ``c == 0``.
"""
from __future__ import annotations

import enum
import os
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.io

from .errors import (CovariateSymmetryWarning, ParseError, ShapeMismatch,
                     SymmetryViolation)


class Kind(enum.Enum):
    DIRECTED = "directed"
    SYMMETRIC = "symmetric"
    LBM = "lbm"

    @classmethod
    def parse(cls, value: "Kind | str") -> "Kind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown structure {value!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


@dataclass(frozen=True)
class NetworkStructure:
    kind: Kind
    n1: int
    n2: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("node counts must be positive")
        if self.is_sbm and self.n1 != self.n2:
            raise ShapeMismatch(
                f"{self.kind.value} SBM needs a square matrix, got {self.n1}x{self.n2}")

    @classmethod
    def sbm(cls, n: int, symmetric: bool = False) -> "NetworkStructure":
        return cls(Kind.SYMMETRIC if symmetric else Kind.DIRECTED, n, n)

    @classmethod
    def lbm(cls, n1: int, n2: int) -> "NetworkStructure":
        return cls(Kind.LBM, n1, n2)

    @property
    def is_sbm(self) -> bool:
        return self.kind is not Kind.LBM

    @property
    def is_lbm(self) -> bool:
        return self.kind is Kind.LBM

    @property
    def symmetric(self) -> bool:
        return self.kind is Kind.SYMMETRIC

    @property
    def n(self) -> int:
        return self.n1

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkData:
    """Immutable container for one observed network.

    Diagonal entries of an SBM network are kept as given (so that files
    round-trip) but every computation masks them out.
    """

    structure: NetworkStructure
    X: np.ndarray
    Y: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3:
            raise ShapeMismatch(f"values must be 2-D or a stack of 2-D matrices, got ndim={X.ndim}")
        if X.shape[1:] != self.structure.shape:
            raise ShapeMismatch(f"value matrix shape {X.shape[1:]} does not match "
                                f"structure {self.structure.shape}")
        Y = self.Y
        if Y is None:
            Y = np.zeros((0,) + self.structure.shape)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim == 2:
            Y = Y[None]
        if Y.ndim != 3 or Y.shape[1:] != self.structure.shape:
            raise ShapeMismatch(f"covariate shape {Y.shape[1:]} differs from values shape "
                                f"{self.structure.shape}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(Y)):
            raise ParseError("values and covariates must be finite (missing data is not supported)")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))

    @classmethod
    def from_arrays(cls, X, Y=None, kind: Kind | str = Kind.DIRECTED) -> "NetworkData":
        kind = Kind.parse(kind)
        X = np.asarray(X, dtype=float)
        shape = X.shape[-2:]
        if kind is not Kind.LBM and shape[0] != shape[1]:
            raise ShapeMismatch(f"{kind.value} SBM needs a square matrix, got {shape[0]}x{shape[1]}")
        data = cls(NetworkStructure(kind, *shape), X, Y)
        if kind is Kind.SYMMETRIC:
            data = data._checked_symmetric()
        return data

    def _checked_symmetric(self) -> "NetworkData":
        off = ~np.eye(self.n, dtype=bool)
        for a in range(self.p):
            x = self.X[a]
            if not np.array_equal(x[off], x.T[off]):
                i, j = np.argwhere((x != x.T) & off)[0]
                raise SymmetryViolation(
                    f"X[{i},{j}]={x[i, j]:g} but X[{j},{i}]={x[j, i]:g} in a symmetric network")
        if self.c and not all(np.array_equal(y[off], y.T[off]) for y in self.Y):
            warnings.warn("covariates of a symmetric network are not symmetric; "
                          "the upper triangle is mirrored", CovariateSymmetryWarning, stacklevel=3)
            Y = np.array([np.triu(y) + np.triu(y, 1).T for y in self.Y])
            return NetworkData(self.structure, self.X, Y)
        return self

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def c(self) -> int:
        return self.Y.shape[0]

    @property
    def n(self) -> int:
        return self.structure.n1

    @property
    def n1(self) -> int:
        return self.structure.n1

    @property
    def n2(self) -> int:
        return self.structure.n2

    @property
    def kind(self) -> Kind:
        return self.structure.kind

    def dyad_mask(self) -> np.ndarray:
        """0/1 matrix selecting the observed dyads: i != j, i < j, or all pairs."""
        n1, n2 = self.structure.shape
        if self.kind is Kind.LBM:
            return np.ones((n1, n2))
        if self.kind is Kind.SYMMETRIC:
            return np.triu(np.ones((n1, n2)), 1)
        return 1.0 - np.eye(n1)

    def clean_values(self) -> np.ndarray:
        """Values with SBM diagonal entries replaced by zero."""
        if self.structure.is_lbm:
            return np.array(self.X)
        X = np.array(self.X)
        idx = np.arange(self.n)
        X[:, idx, idx] = 0.0
        return X

    def clean_covariates(self) -> np.ndarray:
        if self.structure.is_lbm:
            return np.array(self.Y)
        Y = np.array(self.Y)
        idx = np.arange(self.n)
        Y[:, idx, idx] = 0.0
        return Y

    def dyads(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column indices of the observed dyads, row-major."""
        return np.nonzero(self.dyad_mask())


def dyad_count(data: NetworkData) -> int:
    n1, n2 = data.structure.shape
    if data.kind is Kind.DIRECTED:
        return n1 * (n1 - 1)
    if data.kind is Kind.SYMMETRIC:
        return n1 * (n1 - 1) // 2
    return n1 * n2


# --------------------------------------------------------------------------
# file formats

def read_matrix(path: str | os.PathLike) -> np.ndarray:
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if not os.path.exists(path):
        raise ParseError(f"{path}: no such file")
    try:
        if ext == ".mtx":
            m = scipy.io.mmread(path)
            if hasattr(m, "toarray"):
                raise ParseError(f"{path}: only the Matrix Market array format is supported")
            m = np.asarray(m, dtype=float)
        elif ext == ".csv":
            with open(path) as fh:
                rows = [line.strip() for line in fh if line.strip()]
            if not rows:
                raise ParseError(f"{path}: empty file")
            m = np.array([[float(v) for v in r.split(",")] for r in rows])
        else:
            raise ParseError(f"{path}: unknown matrix format {ext!r} (use .csv or .mtx)")
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if m.ndim != 2:
        raise ParseError(f"{path}: rows have inconsistent lengths")
    if not np.all(np.isfinite(m)):
        raise ParseError(f"{path}: non-finite entries (missing data is not supported)")
    return m


def write_matrix(path: str | os.PathLike, m: np.ndarray) -> None:
    """Write a dense matrix with enough digits to round-trip exactly."""
    path = os.fspath(path)
    m = np.asarray(m, dtype=float)
    ext = os.path.splitext(path)[1].lower()
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    with open(path, "w") as fh:
        if ext == ".mtx":
            fh.write("%%MatrixMarket matrix array real general\n")
            fh.write(f"{m.shape[0]} {m.shape[1]}\n")
            for v in m.ravel(order="F"):
                fh.write(fmt(v) + "\n")
        elif ext == ".csv":
            for row in m:
                fh.write(",".join(fmt(v) for v in row) + "\n")
        else:
            raise ParseError(f"{path}: unknown matrix format {ext!r} (use .csv or .mtx)")


def load_network(adjacency_path, covariate_paths: Sequence = (),
                 structure: Kind | str = Kind.DIRECTED,
                 family_id: str | None = None) -> NetworkData:
    """Read and validate a network.

    ``adjacency_path`` is a path or a sequence of paths (one per value
    component for multivariate families).  When ``family_id`` is given, the
    value domain and covariate requirements of that family are checked.
    """
    if isinstance(adjacency_path, (str, os.PathLike)):
        adjacency_path = [adjacency_path]
    mats = [read_matrix(p) for p in adjacency_path]
    if len({m.shape for m in mats}) > 1:
        raise ShapeMismatch("value components have different shapes: "
                            + ", ".join(f"{m.shape}" for m in mats))
    covs = [read_matrix(p) for p in covariate_paths]
    for p, y in zip(covariate_paths, covs):
        if y.shape != mats[0].shape:
            raise ShapeMismatch(f"{p}: covariate shape {y.shape} differs from adjacency {mats[0].shape}")
    Y = np.array(covs) if covs else None
    data = NetworkData.from_arrays(np.array(mats), Y, kind=structure)
    if family_id is not None:
        from .families import get_family
        get_family(family_id).validate(data)
    return data


def save_network(data: NetworkData, adjacency_paths: Sequence, covariate_paths: Sequence = ()) -> None:
    if isinstance(adjacency_paths, (str, os.PathLike)):
        adjacency_paths = [adjacency_paths]
    if len(adjacency_paths) != data.p or len(covariate_paths) != data.c:
        raise ValueError("one path per value component and per covariate is required")
    for p, x in zip(adjacency_paths, data.X):
        write_matrix(p, x)
    for p, y in zip(covariate_paths, data.Y):
        write_matrix(p, y)
