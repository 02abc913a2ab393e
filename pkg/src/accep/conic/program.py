"""Structured convex program: bounded variables, a linear objective, linear
rows and second-order-cone constraints, each row block tagged with a label."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

Term = tuple[np.ndarray, "np.ndarray | float"]


def _row_count(sizes: list[int]) -> int:
    # broadcasting length; any empty operand means an empty block
    if any(n == 0 for n in sizes):
        return 0
    return max(sizes, default=0)


@dataclass
class _Rows:
    rows: list[np.ndarray] = field(default_factory=list)
    cols: list[np.ndarray] = field(default_factory=list)
    vals: list[np.ndarray] = field(default_factory=list)
    rhs: list[np.ndarray] = field(default_factory=list)
    tags: list[tuple[str, int, int]] = field(default_factory=list)  # (tag, start, stop)
    n: int = 0

    def add(self, tag: str, terms: Sequence[Term], rhs, sign: float = 1.0) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float).ravel()
        m = _row_count([np.size(idx) for idx, _ in terms] + [rhs.size])
        rhs = np.broadcast_to(rhs, (m,)) if rhs.size else np.zeros(m)
        row_ids = np.arange(self.n, self.n + m)
        for idx, coef in terms:
            idx = np.broadcast_to(np.asarray(idx, dtype=int).ravel(), (m,))
            coef = np.broadcast_to(np.asarray(coef, dtype=float).ravel(), (m,))
            keep = (idx >= 0) & (coef != 0)
            self.rows.append(row_ids[keep])
            self.cols.append(idx[keep])
            self.vals.append(sign * coef[keep])
        self.rhs.append(sign * np.array(rhs, dtype=float))
        self.tags.append((tag, self.n, self.n + m))
        self.n += m
        return row_ids

    def add_matrix(self, tag: str, mat: sp.spmatrix, rhs, sign: float = 1.0) -> np.ndarray:
        coo = sp.coo_matrix(mat)
        m = coo.shape[0]
        row_ids = np.arange(self.n, self.n + m)
        keep = coo.data != 0
        self.rows.append(coo.row[keep] + self.n)
        self.cols.append(coo.col[keep].astype(int))
        self.vals.append(sign * coo.data[keep])
        self.rhs.append(sign * np.broadcast_to(np.asarray(rhs, dtype=float), (m,)).copy())
        self.tags.append((tag, self.n, self.n + m))
        self.n += m
        return row_ids

    def matrix(self, nvar: int) -> sp.csr_matrix:
        if self.rows:
            r, c, v = (np.concatenate(a) for a in (self.rows, self.cols, self.vals))
        else:
            r = c = np.zeros(0, dtype=int)
            v = np.zeros(0)
        return sp.csr_matrix((v, (r, c)), shape=(self.n, nvar))

    def rhs_vector(self) -> np.ndarray:
        return np.concatenate(self.rhs) if self.rhs else np.zeros(0)


@dataclass(frozen=True)
class SocBlock:
    """``m`` cones of dimension ``dim``: ``||(x_1..x_{dim-1})|| <= x_0``.

    ``matrix`` maps the variables to the stacked affine components (row
    ``i*dim + j`` is component ``j`` of cone ``i``), ``offset`` is the
    constant part.
    """

    tag: str
    dim: int
    matrix: sp.csr_matrix
    offset: np.ndarray

    @property
    def count(self) -> int:
        return self.offset.size // self.dim


class ConvexProgram:
    """min c'x  s.t.  lb <= x <= ub,  Ax = b,  Gx <= h,  SOC blocks."""

    def __init__(self) -> None:
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._names: list[tuple[str, int, int]] = []
        self.nvar = 0
        self._c_parts: list[tuple[np.ndarray, np.ndarray]] = []
        self.objective_constant = 0.0
        self.eq = _Rows()
        self.le = _Rows()
        self.socs: list[SocBlock] = []
        self.tags: list[str] = []

    # -- variables ---------------------------------------------------------
    def add_var(self, name: str, shape, lb=0.0, ub=np.inf) -> np.ndarray:
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.nvar, self.nvar + n).reshape(shape)
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel().copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel().copy())
        self._names.append((name, self.nvar, self.nvar + n))
        self.nvar += n
        return idx

    @property
    def lb(self) -> np.ndarray:
        return np.concatenate(self._lb) if self._lb else np.zeros(0)

    @property
    def ub(self) -> np.ndarray:
        return np.concatenate(self._ub) if self._ub else np.zeros(0)

    def set_bounds(self, idx, lb=None, ub=None) -> None:
        lbv, ubv = self.lb, self.ub
        if lb is not None:
            lbv[np.asarray(idx).ravel()] = np.broadcast_to(lb, np.shape(np.asarray(idx).ravel()))
        if ub is not None:
            ubv[np.asarray(idx).ravel()] = np.broadcast_to(ub, np.shape(np.asarray(idx).ravel()))
        self._lb, self._ub = [lbv], [ubv]

    def var_name(self, i: int) -> str:
        for name, start, stop in self._names:
            if start <= i < stop:
                return f"{name}[{i - start}]"
        raise IndexError(i)

    # -- objective ---------------------------------------------------------
    def add_objective(self, idx, coef) -> None:
        idx = np.asarray(idx, dtype=int).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float).ravel(), idx.shape)
        keep = idx >= 0
        self._c_parts.append((idx[keep], coef[keep].copy()))

    @property
    def c(self) -> np.ndarray:
        c = np.zeros(self.nvar)
        for idx, coef in self._c_parts:
            np.add.at(c, idx, coef)
        return c

    # -- constraints -------------------------------------------------------
    def _register(self, tag: str) -> None:
        if tag not in self.tags:
            self.tags.append(tag)

    def add_constraints(self, tag: str, sense: str, terms: Sequence[Term], rhs=0.0) -> np.ndarray:
        """Add rows ``sum_k coef_k * x[idx_k]  (sense)  rhs``, vectorized over rows.

        Indices equal to -1 are skipped, which lets a block mix elements
        with and without a given variable.
        """
        self._register(tag)
        if sense == "==":
            return self.eq.add(tag, terms, rhs)
        if sense == "<=":
            return self.le.add(tag, terms, rhs)
        if sense == ">=":
            return self.le.add(tag, terms, rhs, sign=-1.0)
        raise ValueError(f"unknown sense {sense!r}")

    def add_matrix(self, tag: str, sense: str, mat: sp.spmatrix, rhs=0.0) -> np.ndarray:
        """Add rows ``mat @ x  (sense)  rhs`` given as a sparse matrix over the
        variables created so far."""
        self._register(tag)
        if sense == "==":
            return self.eq.add_matrix(tag, mat, rhs)
        if sense == "<=":
            return self.le.add_matrix(tag, mat, rhs)
        if sense == ">=":
            return self.le.add_matrix(tag, mat, rhs, sign=-1.0)
        raise ValueError(f"unknown sense {sense!r}")

    def add_row(self, tag: str, sense: str, idx, coef, rhs: float) -> int:
        """Add a single row ``coef . x[idx]  (sense)  rhs``."""
        idx = np.asarray(idx, dtype=int).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float).ravel(), idx.shape)
        terms = [(np.array([i]), np.array([a])) for i, a in zip(idx, coef)]
        return int(self.add_constraints(tag, sense, terms, [rhs])[0])

    def add_soc(self, tag: str, components: Sequence[tuple[Sequence[Term], object]]) -> int:
        """Add cones ``||(f_1, .., f_k)|| <= f_0`` for affine ``f_j = terms_j + const_j``.

        ``components[j]`` is ``(terms, const)``; everything broadcasts over
        the number of cones.  Returns the number of cones added.
        """
        self._register(tag)
        dim = len(components)
        sizes = []
        for terms, const in components:
            sizes += [np.size(const)] + [np.size(i) for i, _ in terms]
        m = _row_count(sizes)
        rows, cols, vals = [], [], []
        offset = np.zeros((m, dim))
        cone_ids = np.arange(m)
        for j, (terms, const) in enumerate(components):
            offset[:, j] = np.broadcast_to(np.asarray(const, dtype=float).ravel(), (m,))
            for idx, coef in terms:
                idx = np.broadcast_to(np.asarray(idx, dtype=int).ravel(), (m,))
                coef = np.broadcast_to(np.asarray(coef, dtype=float).ravel(), (m,))
                keep = (idx >= 0) & (coef != 0)
                rows.append(cone_ids[keep] * dim + j)
                cols.append(idx[keep])
                vals.append(coef[keep])
        if rows:
            r, c, v = (np.concatenate(a) for a in (rows, cols, vals))
        else:
            r = c = np.zeros(0, dtype=int)
            v = np.zeros(0)
        mat = sp.csr_matrix((v, (r, c)), shape=(m * dim, self.nvar))
        self.socs.append(SocBlock(tag, dim, mat, offset.ravel()))
        return m

    # -- views -------------------------------------------------------------
    def equality_system(self) -> tuple[sp.csr_matrix, np.ndarray]:
        return self.eq.matrix(self.nvar), self.eq.rhs_vector()

    def inequality_system(self) -> tuple[sp.csr_matrix, np.ndarray]:
        return self.le.matrix(self.nvar), self.le.rhs_vector()

    def soc_blocks(self) -> list[SocBlock]:
        # SOC matrices were sized when added; pad to the final variable count
        out = []
        for blk in self.socs:
            mat = blk.matrix
            if mat.shape[1] != self.nvar:
                mat = sp.csr_matrix((mat.data, mat.indices, mat.indptr),
                                    shape=(mat.shape[0], self.nvar))
            out.append(SocBlock(blk.tag, blk.dim, mat, blk.offset))
        return out

    def row_tags(self, kind: str) -> list[tuple[str, int, int]]:
        return list((self.eq if kind == "eq" else self.le).tags)

    def tag_multiset(self) -> dict[str, int]:
        """Row (or cone) counts per constraint tag, including empty blocks."""
        counts = {t: 0 for t in self.tags}
        for tag, a, b in self.eq.tags + self.le.tags:
            counts[tag] += b - a
        for blk in self.socs:
            counts[blk.tag] += blk.count
        return counts

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.objective_constant

    def size(self) -> dict[str, int]:
        return {"variables": self.nvar, "equalities": self.eq.n, "inequalities": self.le.n,
                "cones": sum(b.count for b in self.socs)}

    def dump(self) -> str:
        """Canonical text form, one constraint per line."""
        lines = [f"vars {self.nvar}"]
        lb, ub = self.lb, self.ub
        for i in range(self.nvar):
            lines.append(f"var {i} {self.var_name(i)} {lb[i]:.17g} {ub[i]:.17g}")
        c = self.c
        lines.append("min " + " ".join(f"{v:+.17g}*x{i}" for i, v in enumerate(c) if v)
                     + f" {self.objective_constant:+.17g}")
        for kind, rows, op in (("eq", self.eq, "=="), ("le", self.le, "<=")):
            mat = rows.matrix(self.nvar).tocsr()
            mat.sort_indices()
            rhs = rows.rhs_vector()
            for tag, a, b in rows.tags:
                for r in range(a, b):
                    lo, hi = mat.indptr[r], mat.indptr[r + 1]
                    expr = " ".join(f"{v:+.17g}*x{j}" for j, v in
                                    zip(mat.indices[lo:hi], mat.data[lo:hi]))
                    lines.append(f"{kind} {tag} {expr} {op} {rhs[r]:.17g}")
        for blk in self.soc_blocks():
            mat = blk.matrix.tocsr()
            mat.sort_indices()
            for i in range(blk.count):
                parts = []
                for j in range(blk.dim):
                    r = i * blk.dim + j
                    lo, hi = mat.indptr[r], mat.indptr[r + 1]
                    parts.append(" ".join(f"{v:+.17g}*x{k}" for k, v in
                                          zip(mat.indices[lo:hi], mat.data[lo:hi]))
                                 + f" {blk.offset[r]:+.17g}")
                lines.append(f"soc {blk.tag} " + " | ".join(parts))
        return "\n".join(lines) + "\n"
