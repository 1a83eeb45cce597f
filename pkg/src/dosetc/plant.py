"""Multi-output LTI plant with one output matrix per transmission channel."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DimensionError, as_matrix, rank

RANK_REL_TOL = 1e-9


class StructuralError(ValueError):
    """Raised when (A, B) is not controllable or (A, C) not observable."""


def _krylov(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def check_controllability(A, B) -> bool:
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows, A is {n}x{n}")
    return rank(_krylov(A, B), RANK_REL_TOL) == n


def check_observability(A, C_stack) -> bool:
    A = as_matrix(A, "A")
    C = as_matrix(C_stack, "C")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A must be square, got {A.shape}")
    if C.shape[1] != n:
        raise DimensionError(f"C has {C.shape[1]} columns, A is {n}x{n}")
    return check_controllability(A.T, C.T)


@dataclass(frozen=True)
class PlantModel:
    A: np.ndarray
    B: np.ndarray
    channels: tuple[np.ndarray, ...]

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, A is {n}x{n}")
        chans = tuple(as_matrix(C, f"C[{i}]") for i, C in enumerate(self.channels))
        if not chans:
            raise DimensionError("at least one output channel is required")
        for i, C in enumerate(chans):
            if C.shape[1] != n:
                raise DimensionError(f"C[{i}] has {C.shape[1]} columns, expected {n}")
        for arr in (A, B, *chans):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "channels", chans)
        if not check_controllability(A, B):
            raise StructuralError("(A, B) is not controllable")
        if not check_observability(A, self.C_stack):
            raise StructuralError("(A, [C_1; ...; C_ns]) is not observable")

    @property
    def n_p(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_s(self) -> int:
        return len(self.channels)

    @property
    def C_stack(self) -> np.ndarray:
        return np.vstack(self.channels)

    def output(self, i: int, x_p) -> np.ndarray:
        """Channel output y_i for a 1-based channel index."""
        return self.channels[i - 1] @ np.asarray(x_p, dtype=float)


def plant_derivative(model: PlantModel, x_p, u, w) -> np.ndarray:
    x_p = np.asarray(x_p, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if x_p.shape != (model.n_p,) or u.shape != (model.n_u,) or w.shape != (model.n_p,):
        raise DimensionError(
            f"expected x_p ({model.n_p},), u ({model.n_u},), w ({model.n_p},); "
            f"got {x_p.shape}, {u.shape}, {w.shape}"
        )
    return model.A @ x_p + model.B @ u + w
