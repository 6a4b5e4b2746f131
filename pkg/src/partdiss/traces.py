"""Trace container and on-disk formats for solver runs.

A DecayTrace is the time series a simulation emits: entropy integral,
requested Lambda^s norms per component group, transported-mode L^q
norms, decay-slope fits, and run flags.  CSV holds the series, JSON the
fits and flags; binary snapshots store full fields for later Duhamel or
restart use.
"""

import dataclasses
import json
import struct

import numpy as np

GROUP_ORDER = ("u1", "C", "D")

SNAPSHOT_MAGIC = b"PDSSNAP1"


def group_slice(group, r, n):
    if group == "u1":
        return slice(0, 1)
    if group == "C":
        return slice(1, r)
    if group == "D":
        return slice(r, n)
    if group == "flat":
        return slice(1, n)
    if group == "all":
        return slice(0, n)
    raise ValueError("unknown component group %r" % (group,))


def _norm_key(group, s):
    return "n_%s_s%g" % (group, s)


@dataclasses.dataclass
class DecayTrace:
    t: np.ndarray
    entropy: np.ndarray
    norms: dict                  # (group, s) -> array over t
    v1: dict                     # q -> array over t
    fits: dict = dataclasses.field(default_factory=dict)
    prediction: dict = dataclasses.field(default_factory=dict)
    flags: dict = dataclasses.field(default_factory=dict)
    meta: dict = dataclasses.field(default_factory=dict)

    def column_names(self):
        cols = ["t", "E_entropy"]
        for group, s in self._norm_order():
            cols.append(_norm_key(group, s))
        for q in sorted(self.v1):
            cols.append("v1_L%g" % q)
        return cols

    def _norm_order(self):
        def key(gs):
            group, s = gs
            return (GROUP_ORDER.index(group) if group in GROUP_ORDER
                    else len(GROUP_ORDER), s)
        return sorted(self.norms, key=key)

    def to_csv(self, path):
        cols = self.column_names()
        series = [np.asarray(self.t, dtype=float),
                  np.asarray(self.entropy, dtype=float)]
        series += [np.asarray(self.norms[k], dtype=float)
                   for k in self._norm_order()]
        series += [np.asarray(self.v1[q], dtype=float)
                   for q in sorted(self.v1)]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self.t)):
                fh.write(",".join("%.17g" % col[i] for col in series) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        cols = {name: data[:, i] for i, name in enumerate(header)}
        norms = {}
        v1 = {}
        for name in header:
            if name.startswith("n_"):
                group, s_tag = name[2:].rsplit("_s", 1)
                norms[(group, float(s_tag))] = cols[name]
            elif name.startswith("v1_L"):
                v1[float(name[4:])] = cols[name]
        return cls(t=cols["t"], entropy=cols["E_entropy"], norms=norms, v1=v1)

    def to_json(self):
        return json.dumps({
            "fits": self.fits,
            "prediction": self.prediction,
            "flags": self.flags,
            "meta": self.meta,
            "columns": self.column_names(),
            "n_samples": int(len(self.t)),
        }, sort_keys=True, indent=2, default=_json_default)

    def save(self, csv_path, json_path=None):
        self.to_csv(csv_path)
        if json_path is not None:
            with open(json_path, "w") as fh:
                fh.write(self.to_json())
                fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError("not JSON serializable: %r" % type(obj))


def write_snapshot(path, field, time):
    """Binary field snapshot: magic, then (d, N, n) int32 and the time as
    float64, all little-endian, then components row-major float64."""
    field = np.ascontiguousarray(field, dtype="<f8")
    n = field.shape[0]
    d = field.ndim - 1
    N = field.shape[1]
    if field.shape[1:] != (N,) * d:
        raise ValueError("snapshot expects a (n, N, ..., N) field")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<iiid", d, N, n, float(time)))
        fh.write(field.tobytes(order="C"))


def read_snapshot(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise ValueError("not a snapshot file (bad magic)")
        d, N, n, time = struct.unpack("<iiid", fh.read(20))
        data = np.frombuffer(fh.read(), dtype="<f8")
    expect = n * N**d
    if data.size != expect:
        raise ValueError("snapshot payload truncated: %d of %d values"
                         % (data.size, expect))
    return data.reshape((n,) + (N,) * d).copy(), {"d": d, "N": N, "n": n,
                                                  "time": time}
