"""Chain data model, CSV persistence and chain surgery.

A chain is stored as up to four CSV files plus a JSON manifest:

``samples.csv``       header ``x1,...,xd``
``gradients.csv``     header ``g1,...,gd`` (score at every sample)
``proposals.csv``     header ``p1,...,pd,ratio,accept`` (n-1 rows)
``conditionals.csv``  header ``c1,...,ck`` (Gibbs conditional probabilities)

Numbers are written with 17 significant digits so that a save/load cycle
reproduces every finite double bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    ChainFormatError,
    ConfigError,
    NonFiniteError,
    ShapeMismatchError,
)

SAMPLES_FILE = "samples.csv"
GRADIENTS_FILE = "gradients.csv"
PROPOSALS_FILE = "proposals.csv"
CONDITIONALS_FILE = "conditionals.csv"
MANIFEST_FILE = "manifest.json"


def _frozen(a, ndim, name):
    if a is None:
        return None
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ShapeMismatchError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    bad = np.argwhere(~np.isfinite(arr))
    if bad.size:
        pos = tuple(int(i) + 1 for i in bad[0])
        raise NonFiniteError(
            f"non-finite value in {name}",
            row=pos[0],
            column=pos[1] if len(pos) > 1 else None,
        )
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ChainRecord:
    """One MCMC run.

    Attributes
    ----------
    samples : (n, d) array
        States ``X^(1..n)``, one row per iteration.
    gradients : (n, d) array, optional
        Score ``grad log pi`` at each sample.
    proposals : (n-1, d) array, optional
        Proposal drawn when moving from row ``i`` to row ``i+1``.
    mh_ratios : (n-1,) array, optional
        Metropolis-Hastings ratio ``R(x_i, y_i)`` of each proposal.
    accepts : (n-1,) array of 0/1, optional
        Whether each proposal was accepted.
    sampler : str, optional
        Name of the kernel that produced the chain (``"rwm"``,
        ``"gibbs_gaussian"``, ``"bvs_gibbs"``, ``"tabular"``). Used to guard
        estimators that are only valid for the chain's own transition kernel.

    Arrays are copied and made read-only on construction.
    """

    samples: np.ndarray
    gradients: np.ndarray | None = None
    proposals: np.ndarray | None = None
    mh_ratios: np.ndarray | None = None
    accepts: np.ndarray | None = None
    sampler: str | None = None

    def __post_init__(self):
        s = _frozen(self.samples, 2, "samples")
        n, d = s.shape
        if n < 1 or d < 1:
            raise ShapeMismatchError(f"samples must be non-empty, got shape {s.shape}")
        object.__setattr__(self, "samples", s)

        g = _frozen(self.gradients, 2, "gradients")
        if g is not None and g.shape != (n, d):
            raise ShapeMismatchError(f"gradients shape {g.shape} does not match samples {(n, d)}")
        object.__setattr__(self, "gradients", g)

        blocks = (self.proposals, self.mh_ratios, self.accepts)
        if any(b is not None for b in blocks) and not all(b is not None for b in blocks):
            raise ShapeMismatchError("proposals, mh_ratios and accepts must be given together")
        p = _frozen(self.proposals, 2, "proposals")
        r = _frozen(self.mh_ratios, 1, "mh_ratios")
        a = _frozen(self.accepts, 1, "accepts")
        if p is not None:
            if p.shape != (n - 1, d):
                raise ShapeMismatchError(f"proposals shape {p.shape}, expected {(n - 1, d)}")
            if r.shape != (n - 1,) or a.shape != (n - 1,):
                raise ShapeMismatchError("mh_ratios and accepts must have length n-1")
            if np.any(r < 0):
                i = int(np.argmax(r < 0))
                raise ChainFormatError("negative MH ratio", row=i + 1)
            if not np.all((a == 0) | (a == 1)):
                i = int(np.argmax((a != 0) & (a != 1)))
                raise ChainFormatError("accept flags must be 0 or 1", row=i + 1)
            moved = a == 1
            nxt = s[1:]
            ok = np.where(moved[:, None], nxt == p, nxt == s[:-1]).all(axis=1)
            if not ok.all():
                i = int(np.argmin(ok))
                raise ChainFormatError(
                    "accept flag inconsistent with samples "
                    f"(accept={int(a[i])} but next state does not match)",
                    row=i + 1,
                )
        object.__setattr__(self, "proposals", p)
        object.__setattr__(self, "mh_ratios", r)
        object.__setattr__(self, "accepts", a)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def has_proposals(self) -> bool:
        return self.proposals is not None

    def without_proposals(self) -> ChainRecord:
        return replace(self, proposals=None, mh_ratios=None, accepts=None)

    def head(self, k: int) -> ChainRecord:
        """First ``k`` rows, keeping proposal blocks aligned."""
        if not 1 <= k <= self.n:
            raise ConfigError(f"head size {k} outside [1, {self.n}]")
        return ChainRecord(
            samples=self.samples[:k],
            gradients=None if self.gradients is None else self.gradients[:k],
            proposals=None if self.proposals is None else self.proposals[: k - 1],
            mh_ratios=None if self.mh_ratios is None else self.mh_ratios[: k - 1],
            accepts=None if self.accepts is None else self.accepts[: k - 1],
            sampler=self.sampler,
        )

    def equals(self, other: ChainRecord) -> bool:
        """Exact (bitwise) equality of all blocks."""

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.sampler == other.sampler
            and same(self.samples, other.samples)
            and same(self.gradients, other.gradients)
            and same(self.proposals, other.proposals)
            and same(self.mh_ratios, other.mh_ratios)
            and same(self.accepts, other.accepts)
        )


# ---------------------------------------------------------------------------
# Integrands


@dataclass(frozen=True)
class IntegrandSpec:
    """Function of interest ``f``.

    Coordinates are numbered from 1, matching the ``x1..xd`` CSV header, so
    ``IntegrandSpec.coordinate(1)`` is the first column of the samples.
    """

    kind: str
    index: int | None = None
    func: Callable[[np.ndarray], float] | None = field(default=None, compare=False)
    name: str | None = None

    @classmethod
    def coordinate(cls, j: int) -> IntegrandSpec:
        return cls("coordinate", index=int(j), name=f"x{j}")

    @classmethod
    def coordinate_square(cls, j: int) -> IntegrandSpec:
        return cls("coordinate_square", index=int(j), name=f"x{j}^2")

    @classmethod
    def custom(cls, func: Callable[[np.ndarray], float], name: str = "custom") -> IntegrandSpec:
        return cls("custom", func=func, name=name)

    @classmethod
    def parse(cls, text: str) -> IntegrandSpec:
        """Parse ``"x3"`` or ``"x3^2"``."""
        t = text.strip().replace(" ", "")
        try:
            if t.startswith("x") and t.endswith("^2"):
                return cls.coordinate_square(int(t[1:-2]))
            if t.startswith("x"):
                return cls.coordinate(int(t[1:]))
        except ValueError:
            pass
        raise ConfigError(f"cannot parse integrand {text!r}; expected 'xJ' or 'xJ^2'")

    def __str__(self):
        return self.name or self.kind


def evaluate_integrand(chain: ChainRecord | np.ndarray, f: IntegrandSpec) -> np.ndarray:
    """Evaluate ``f`` at every row of ``chain`` (or of a bare state matrix)."""
    X = chain.samples if isinstance(chain, ChainRecord) else np.atleast_2d(np.asarray(chain, float))
    if f.kind == "custom":
        return np.array([float(f.func(x)) for x in X])
    if f.kind not in ("coordinate", "coordinate_square"):
        raise ConfigError(f"unknown integrand kind {f.kind!r}")
    if f.index is None or not 1 <= f.index <= X.shape[1]:
        raise ConfigError(f"coordinate index {f.index} outside [1, {X.shape[1]}]")
    col = np.array(X[:, f.index - 1], dtype=float)
    return col if f.kind == "coordinate" else col * col


# ---------------------------------------------------------------------------
# Surgery


def drop_burn_in(chain: ChainRecord, b: int) -> ChainRecord:
    """Remove the first ``b`` iterations from every block."""
    if not 0 <= b <= chain.n - 2:
        raise ConfigError(f"burn-in {b} outside [0, {chain.n - 2}]")
    if b == 0:
        return chain
    return ChainRecord(
        samples=chain.samples[b:],
        gradients=None if chain.gradients is None else chain.gradients[b:],
        proposals=None if chain.proposals is None else chain.proposals[b:],
        mh_ratios=None if chain.mh_ratios is None else chain.mh_ratios[b:],
        accepts=None if chain.accepts is None else chain.accepts[b:],
        sampler=chain.sampler,
    )


def thin(chain: ChainRecord, k: int) -> ChainRecord:
    """Keep every ``k``-th row starting with the first.

    Proposal blocks are discarded for ``k > 1`` since they no longer describe
    single transitions of the thinned chain.
    """
    if k < 1:
        raise ConfigError(f"thinning stride must be >= 1, got {k}")
    if k == 1:
        return chain
    return ChainRecord(
        samples=chain.samples[::k],
        gradients=None if chain.gradients is None else chain.gradients[::k],
        sampler=chain.sampler,
    )


def deduplicate(chain: ChainRecord) -> tuple[ChainRecord, np.ndarray]:
    """Drop rows identical to an earlier row.

    Returns the reduced chain (without proposal blocks) and the 0-based
    indices of the kept rows in the original chain.
    """
    X = chain.samples
    seen = set()
    keep = []
    for i, row in enumerate(X):
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    idx = np.asarray(keep, dtype=int)
    reduced = ChainRecord(
        samples=X[idx],
        gradients=None if chain.gradients is None else chain.gradients[idx],
        sampler=chain.sampler,
    )
    return reduced, idx


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: list[str], rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_matrix_csv(path, prefix: str | None = None, ncols: int | None = None) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with one header row.

    Raises :class:`ChainFormatError` / :class:`NonFiniteError` naming the
    offending row and column (1-based, header excluded).
    """
    path = Path(path)
    if not path.exists():
        raise ChainFormatError("file not found", path=path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ChainFormatError("empty file", path=path) from None
        if ncols is not None and len(header) != ncols:
            raise ShapeMismatchError(f"expected {ncols} columns, header has {len(header)}", path=path)
        if prefix is not None:
            for j, h in enumerate(header):
                if h != f"{prefix}{j + 1}":
                    raise ChainFormatError(f"unexpected header {h!r}", path=path, column=j + 1)
        rows = []
        for i, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ShapeMismatchError(
                    f"expected {len(header)} fields, found {len(rec)}", path=path, row=i
                )
            vals = []
            for j, c in enumerate(rec, start=1):
                try:
                    v = float(c)
                except ValueError:
                    raise ChainFormatError(f"cannot parse {c!r} as a number", path=path, row=i, column=j) from None
                if not np.isfinite(v):
                    raise NonFiniteError(f"non-finite value {c!r}", path=path, row=i, column=j)
                vals.append(v)
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, arr


def save_chain(chain: ChainRecord, out_dir) -> list[Path]:
    """Write the chain's CSV files into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = chain.d
    written = []
    p = out / SAMPLES_FILE
    _write_csv(p, [f"x{j + 1}" for j in range(d)], chain.samples)
    written.append(p)
    if chain.gradients is not None:
        p = out / GRADIENTS_FILE
        _write_csv(p, [f"g{j + 1}" for j in range(d)], chain.gradients)
        written.append(p)
    if chain.proposals is not None:
        p = out / PROPOSALS_FILE
        body = np.column_stack([chain.proposals, chain.mh_ratios, chain.accepts])
        _write_csv(p, [f"p{j + 1}" for j in range(d)] + ["ratio", "accept"], body)
        written.append(p)
    return written


def load_chain(samples_path, gradients_path=None, proposals_path=None, sampler: str | None = None) -> ChainRecord:
    """Load and validate a chain from its CSV files."""
    _, X = read_matrix_csv(samples_path, prefix="x")
    n, d = X.shape
    if n < 2:
        raise ShapeMismatchError(f"a chain needs at least 2 rows, found {n}", path=samples_path)
    G = None
    if gradients_path is not None:
        _, G = read_matrix_csv(gradients_path, prefix="g", ncols=d)
        if G.shape != X.shape:
            raise ShapeMismatchError(
                f"gradients have {G.shape[0]} rows, samples have {n}", path=gradients_path
            )
    P = R = A = None
    if proposals_path is not None:
        header, body = read_matrix_csv(proposals_path, ncols=d + 2)
        expected = [f"p{j + 1}" for j in range(d)] + ["ratio", "accept"]
        if header != expected:
            raise ChainFormatError(f"proposals header must be {','.join(expected)}", path=proposals_path)
        if body.shape[0] != n - 1:
            raise ShapeMismatchError(
                f"proposals have {body.shape[0]} rows, expected {n - 1}", path=proposals_path
            )
        P, R, A = body[:, :d], body[:, d], body[:, d + 1]
    return ChainRecord(samples=X, gradients=G, proposals=P, mh_ratios=R, accepts=A, sampler=sampler)


# ---------------------------------------------------------------------------
# Chain directories


@dataclass(frozen=True, eq=False)
class ChainBundle:
    """A chain together with optional Gibbs conditionals and its manifest."""

    chain: ChainRecord
    conditionals: np.ndarray | None = None
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.conditionals is not None:
            c = _frozen(self.conditionals, 2, "conditionals")
            if c.shape[0] != self.chain.n:
                raise ShapeMismatchError(
                    f"conditionals have {c.shape[0]} rows, chain has {self.chain.n}"
                )
            object.__setattr__(self, "conditionals", c)

    def with_chain(self, chain: ChainRecord, rows=None) -> ChainBundle:
        cond = self.conditionals
        if cond is not None and rows is not None:
            cond = cond[rows]
        return ChainBundle(chain=chain, conditionals=cond, manifest=self.manifest)

    def burn_in(self, b: int) -> ChainBundle:
        if b == 0:
            return self
        return self.with_chain(drop_burn_in(self.chain, b), slice(b, None))

    def thin(self, k: int) -> ChainBundle:
        if k == 1:
            return self
        return self.with_chain(thin(self.chain, k), slice(None, None, k))

    def head(self, k: int) -> ChainBundle:
        return self.with_chain(self.chain.head(k), slice(0, k))


def save_chain_dir(bundle: ChainBundle, out_dir) -> list[Path]:
    out = Path(out_dir)
    written = save_chain(bundle.chain, out)
    if bundle.conditionals is not None:
        p = out / CONDITIONALS_FILE
        k = bundle.conditionals.shape[1]
        _write_csv(p, [f"c{j + 1}" for j in range(k)], bundle.conditionals)
        written.append(p)
    manifest = dict(bundle.manifest)
    manifest["sampler"] = bundle.chain.sampler
    manifest["files"] = sorted(w.name for w in written)
    p = out / MANIFEST_FILE
    with open(p, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(p)
    return written


def load_chain_dir(path) -> ChainBundle:
    """Load every chain file present in a directory written by :func:`save_chain_dir`."""
    root = Path(path)
    if not root.is_dir():
        raise ConfigError(f"chain directory {root} does not exist")
    manifest = {}
    if (root / MANIFEST_FILE).exists():
        with open(root / MANIFEST_FILE) as fh:
            manifest = json.load(fh)

    def opt(name):
        p = root / name
        return p if p.exists() else None

    chain = load_chain(
        root / SAMPLES_FILE,
        gradients_path=opt(GRADIENTS_FILE),
        proposals_path=opt(PROPOSALS_FILE),
        sampler=manifest.get("sampler"),
    )
    cond = None
    if opt(CONDITIONALS_FILE):
        _, cond = read_matrix_csv(root / CONDITIONALS_FILE, prefix="c")
    return ChainBundle(chain=chain, conditionals=cond, manifest=manifest)
