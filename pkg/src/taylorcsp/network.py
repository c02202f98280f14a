"""Dense binary constraint networks and the path-consistency kernel.

A network has ``n`` variables over value codes ``0..D-1``.  Relations are
stored as bit rows: ``rows[i, j, a]`` is the set of values ``b`` (as a bit
mask) with ``(a, b)`` allowed between ``i`` and ``j``.  The diagonal entry
``rows[i, i]`` encodes the domain of ``i``.  Pairs without a constraint
carry the full product of the two domains and are marked absent in
``edges``.
"""

from __future__ import annotations

import hashlib
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .errors import ContractError

MAX_VALUES = 63


class Network:
    def __init__(self, rows: np.ndarray, edges: Optional[np.ndarray] = None, names=None):
        rows = np.ascontiguousarray(rows, dtype=np.uint64)
        if rows.ndim != 3 or rows.shape[0] != rows.shape[1]:
            raise ContractError("rows must have shape (n, n, D)")
        self.rows = rows
        n = rows.shape[0]
        if edges is None:
            edges = ~np.eye(n, dtype=bool)
        self.edges = np.asarray(edges, dtype=bool)
        self.names = tuple(names) if names is not None else tuple(f"v{i}" for i in range(n))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def num_values(self) -> int:
        return self.rows.shape[2]

    @classmethod
    def from_domains(cls, domains: Sequence[int], num_values: int, names=None) -> "Network":
        """Network with no constraints: every pair carries the full product."""
        n = len(domains)
        if num_values > MAX_VALUES:
            raise ContractError(f"at most {MAX_VALUES} values supported")
        rows = np.zeros((n, n, num_values), dtype=np.uint64)
        for i in range(n):
            for j in range(n):
                for a in range(num_values):
                    if domains[i] >> a & 1:
                        rows[i, j, a] = (1 << a) if i == j else domains[j]
        return cls(rows, np.zeros((n, n), dtype=bool), names)

    @classmethod
    def from_dense(cls, dom: np.ndarray, rel: np.ndarray, edges=None, names=None) -> "Network":
        """Build from ``dom`` (n, D) and ``rel`` (n, n, D, D) boolean arrays."""
        n, d = dom.shape
        weights = (np.uint64(1) << np.arange(d, dtype=np.uint64))
        rel = rel & dom[:, None, :, None] & dom[None, :, None, :]
        rows = (rel.astype(np.uint64) * weights).sum(axis=3).astype(np.uint64)
        for i in range(n):
            rows[i, i] = np.where(dom[i], weights, 0)
        if edges is None:
            edges = ~np.eye(n, dtype=bool)
        return cls(rows, edges, names)

    def copy(self) -> "Network":
        return Network(self.rows.copy(), self.edges.copy(), self.names)

    def domain_mask(self, i: int) -> int:
        return int(np.bitwise_or.reduce(self.rows[i, i]))

    def domain_masks(self) -> np.ndarray:
        diag = self.rows[np.arange(self.n), np.arange(self.n)]
        return np.bitwise_or.reduce(diag, axis=1) if self.n else np.zeros(0, np.uint64)

    def domain(self, i: int):
        return _bits(self.domain_mask(i))

    def domain_sizes(self):
        return [len(self.domain(i)) for i in range(self.n)]

    def dom_bool(self) -> np.ndarray:
        masks = self.domain_masks()
        return ((masks[:, None] >> np.arange(self.num_values, dtype=np.uint64)) & 1).astype(bool)

    def rel_bool(self) -> np.ndarray:
        d = self.num_values
        return ((self.rows[..., None] >> np.arange(d, dtype=np.uint64)) & 1).astype(bool)

    def relation(self, i: int, j: int):
        """Allowed pairs between ``i`` and ``j`` as a sorted list."""
        return [(a, b) for a in range(self.num_values) for b in _bits(int(self.rows[i, j, a]))]

    def is_empty(self) -> bool:
        return any(self.domain_mask(i) == 0 for i in range(self.n))

    def fingerprint(self) -> bytes:
        return hashlib.sha1(self.rows.tobytes() + self.edges.tobytes()).digest()

    def restrict(self, i: int, mask: int) -> "Network":
        """Copy with the domain of ``i`` cut to ``mask`` (no propagation)."""
        out = self.copy()
        restrict_in_place(out.rows, i, mask)
        return out

    def image(self, i: int, j: int, mask: int) -> int:
        out = 0
        for a in _bits(mask):
            out |= int(self.rows[i, j, a])
        return out


def _bits(mask: int):
    out = []
    a = 0
    while mask:
        if mask & 1:
            out.append(a)
        mask >>= 1
        a += 1
    return tuple(out)


def restrict_in_place(rows: np.ndarray, i: int, mask: int):
    n, _, d = rows.shape
    m = np.uint64(mask)
    for a in range(d):
        if not (mask >> a) & 1:
            rows[i, :, a] = 0
    rows[:, i, :] &= m


# ---------------------------------------------------------------------------
# path consistency


@njit(cache=True)
def _compose_row(rows, a, b, c, x):
    m = rows[a, b, x]
    out = np.uint64(0)
    y = 0
    while m:
        if m & np.uint64(1):
            out |= rows[b, c, y]
        m >>= np.uint64(1)
        y += 1
    return out


@njit(cache=True)
def _revise(rows, a, c, b):
    """R_ac &= R_ab o R_bc; keeps R_ca the converse.  Returns (changed, ok)."""
    d = rows.shape[2]
    changed = False
    for x in range(d):
        old = rows[a, c, x]
        if old == 0:
            continue
        new = old & _compose_row(rows, a, b, c, x)
        if new != old:
            rows[a, c, x] = new
            changed = True
    if changed and a != c:
        for y in range(d):
            m = np.uint64(0)
            for x in range(d):
                if (rows[a, c, x] >> np.uint64(y)) & np.uint64(1):
                    m |= np.uint64(1) << np.uint64(x)
            rows[c, a, y] = m
    ok = True
    if changed:
        any_row = False
        for x in range(d):
            if rows[a, c, x] != 0:
                any_row = True
                break
        ok = any_row
    return changed, ok


@njit(cache=True)
def _pc(rows, pending):
    n = rows.shape[0]
    cap = n * n + 1
    qi = np.empty(cap, dtype=np.int64)
    qj = np.empty(cap, dtype=np.int64)
    inq = np.zeros((n, n), dtype=np.bool_)
    head = 0
    tail = 0
    size = 0
    for i in range(n):
        for j in range(i, n):
            if pending[i, j] or pending[j, i]:
                qi[tail] = i
                qj[tail] = j
                tail = (tail + 1) % cap
                size += 1
                inq[i, j] = True
    while size > 0:
        i = qi[head]
        j = qj[head]
        head = (head + 1) % cap
        size -= 1
        inq[i, j] = False
        for k in range(n):
            for t in range(2):
                if t == 0:
                    a, c, b = i, k, j
                else:
                    a, c, b = k, j, i
                changed, ok = _revise(rows, a, c, b)
                if not ok:
                    return False
                if changed:
                    p, q = (a, c) if a <= c else (c, a)
                    if not inq[p, q]:
                        inq[p, q] = True
                        qi[tail] = p
                        qj[tail] = q
                        tail = (tail + 1) % cap
                        size += 1
    return True


def enforce_path_consistency(net: Network, pending: Optional[np.ndarray] = None) -> Optional[Network]:
    """(2,3)-minimality on a complete binary network; ``None`` if a domain empties.

    ``pending`` marks the pairs whose relations changed since the network was
    last consistent; by default everything is revisited.
    """
    out = net.copy()
    if out.n == 0:
        return out
    if out.is_empty():
        return None
    if pending is None:
        pending = np.ones((out.n, out.n), dtype=np.bool_)
    ok = _pc(out.rows, np.ascontiguousarray(pending, dtype=np.bool_))
    if not ok or out.is_empty():
        return None
    return out


def restrict_and_propagate(net: Network, cuts) -> Optional[Network]:
    """Cut several domains (``{var: mask}``) and restore path consistency."""
    out = net.copy()
    pending = np.zeros((net.n, net.n), dtype=np.bool_)
    for i, mask in cuts.items():
        if mask & ~net.domain_mask(i):
            mask &= net.domain_mask(i)
        if mask != net.domain_mask(i):
            restrict_in_place(out.rows, i, mask)
            pending[i, :] = True
            pending[:, i] = True
    if not pending.any():
        return out
    if out.is_empty():
        return None
    ok = _pc(out.rows, pending)
    if not ok or out.is_empty():
        return None
    return out


def is_path_consistent(net: Network) -> bool:
    again = enforce_path_consistency(net)
    return again is not None and np.array_equal(again.rows, net.rows)
