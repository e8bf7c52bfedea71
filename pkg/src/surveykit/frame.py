"""Population frame: unit ids, size measures, labels, and auxiliary data."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Frame", "FrameError"]


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    """A finite-population register.

    ids        unique opaque tokens, one per unit; internal dense indices
               follow frame order
    mos        measure of size, nonnegative (defaults to 1.0)
    stratum    optional stratum label per unit
    cluster    optional cluster label per unit; when both labels are present
               every cluster must sit inside a single stratum
    aux        auxiliary matrix, shape (N, k)
    y          optional study values, shape (N,) or (N, m), used by the
               simulation harness
    """

    ids: tuple
    mos: np.ndarray = None
    stratum: tuple = None
    cluster: tuple = None
    aux: np.ndarray = None
    y: np.ndarray = None
    _index: dict = field(default=None, repr=False, compare=False)
    _cache: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        object.__setattr__(self, "ids", ids)
        n = len(ids)
        if n == 0:
            raise FrameError("frame is empty")
        if len(set(ids)) != n:
            raise FrameError("frame ids are not unique")
        mos = self.mos
        if mos is None:
            mos = np.ones(n)
        mos = np.asarray(mos, dtype=float)
        if mos.shape != (n,):
            raise FrameError("mos must have one value per unit")
        if np.any(mos < 0) or not np.all(np.isfinite(mos)):
            raise FrameError("mos must be finite and nonnegative")
        object.__setattr__(self, "mos", mos)
        if self.stratum is not None:
            stratum = tuple(str(s) for s in self.stratum)
            if len(stratum) != n:
                raise FrameError("stratum labels must have one value per unit")
            object.__setattr__(self, "stratum", stratum)
        if self.cluster is not None:
            cluster = tuple(str(c) for c in self.cluster)
            if len(cluster) != n:
                raise FrameError("cluster labels must have one value per unit")
            object.__setattr__(self, "cluster", cluster)
        if self.stratum is not None and self.cluster is not None:
            seen = {}
            for s, c in zip(self.stratum, self.cluster):
                if c in seen and seen[c] != s:
                    raise FrameError(f"cluster {c!r} spans strata {seen[c]!r} and {s!r}")
                seen[c] = s
        if self.aux is not None:
            aux = np.atleast_2d(np.asarray(self.aux, dtype=float))
            if aux.shape[0] == 1 and n > 1:
                aux = aux.T
            if aux.shape[0] != n:
                raise FrameError("aux must have one row per unit")
            object.__setattr__(self, "aux", aux)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float)
            if y.shape[0] != n:
                raise FrameError("y must have one value per unit")
            object.__setattr__(self, "y", y)
        object.__setattr__(self, "_index", {u: i for i, u in enumerate(ids)})
        object.__setattr__(self, "_cache", {})

    @property
    def n_units(self):
        return len(self.ids)

    def __len__(self):
        return len(self.ids)

    def index_of(self, unit_id):
        return self._index[str(unit_id)]

    def y_column(self, j=0):
        if self.y is None:
            raise FrameError("frame carries no study values")
        y = self.y
        return y if y.ndim == 1 else y[:, j]

    def clusters(self):
        """Cluster labels in frame order of first appearance, with index sets."""
        if self.cluster is None:
            raise FrameError("frame carries no cluster labels")
        if "clusters" not in self._cache:
            order, members = [], {}
            for i, c in enumerate(self.cluster):
                if c not in members:
                    members[c] = []
                    order.append(c)
                members[c].append(i)
            self._cache["clusters"] = [
                (c, np.asarray(members[c], dtype=np.int64)) for c in order
            ]
        return self._cache["clusters"]

    def strata(self):
        if self.stratum is None:
            raise FrameError("frame carries no stratum labels")
        if "strata" not in self._cache:
            order, members = [], {}
            for i, s in enumerate(self.stratum):
                if s not in members:
                    members[s] = []
                    order.append(s)
                members[s].append(i)
            self._cache["strata"] = [
                (s, np.asarray(members[s], dtype=np.int64)) for s in order
            ]
        return self._cache["strata"]

    def restrict(self, idx):
        """Sub-frame of the given dense indices (used for per-stratum and
        per-cluster draws); memoized, since designs restrict to the same
        index sets on every replicate."""
        idx = np.asarray(idx, dtype=np.int64)
        key = ("restrict", idx.tobytes())
        if key not in self._cache:
            self._cache[key] = Frame(
                ids=tuple(self.ids[i] for i in idx),
                mos=self.mos[idx],
                stratum=None if self.stratum is None
                else tuple(self.stratum[i] for i in idx),
                cluster=None if self.cluster is None
                else tuple(self.cluster[i] for i in idx),
                aux=None if self.aux is None else self.aux[idx],
                y=None if self.y is None else self.y[idx],
            )
        return self._cache[key]


def _read_frame_rows(rows, header):
    cols = {name: j for j, name in enumerate(header)}
    if "id" not in cols:
        raise FrameError("frame CSV needs an 'id' column")
    xcols = sorted(
        (name for name in cols if name.startswith("x") and name[1:].isdigit()),
        key=lambda name: int(name[1:]),
    )
    ids, mos, stratum, cluster, aux, y = [], [], [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise FrameError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ids.append(row[cols["id"]])
            if "mos" in cols:
                mos.append(float(row[cols["mos"]]))
            if "stratum" in cols:
                stratum.append(row[cols["stratum"]])
            if "cluster" in cols:
                cluster.append(row[cols["cluster"]])
            if "y" in cols:
                y.append(float(row[cols["y"]]))
            if xcols:
                aux.append([float(row[cols[c]]) for c in xcols])
        except ValueError as exc:
            raise FrameError(f"row {lineno}: {exc}") from exc
    return Frame(
        ids=tuple(ids),
        mos=np.asarray(mos) if mos else None,
        stratum=tuple(stratum) if stratum else None,
        cluster=tuple(cluster) if cluster else None,
        aux=np.asarray(aux) if aux else None,
        y=np.asarray(y) if y else None,
    )


def read_frame_csv(path_or_text):
    """Load a frame from CSV: required column ``id``; optional ``mos``,
    ``stratum``, ``cluster``, ``y`` and ``x1..xk``.  UTF-8, '.' decimal."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        handle = io.StringIO(path_or_text)
        reader = csv.reader(handle)
        header = [h.strip() for h in next(reader)]
        return _read_frame_rows(reader, header)
    with open(path_or_text, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = [h.strip() for h in next(reader)]
        return _read_frame_rows(reader, header)
