from dataclasses import dataclass, field

import numpy as np

COLUMNS = (
    "iter",
    "samples",
    "y_sq",
    "critic_err_sq",
    "nat_grad_sq",
    "actor_gap",
    "k_err",
    "A_T",
    "B_T",
    "C_T",
)
INT_COLUMNS = ("iter", "samples")


@dataclass
class RunTrace:
    """Per-iteration learning record plus the final learner state.

    Row ``i`` describes the iterate at ``iter[i]`` (before its update) and the
    environment interactions consumed up to and including that iteration.
    ``A_T``, ``B_T``, ``C_T`` are prefix means of ``y_sq``, ``critic_err_sq``
    and ``nat_grad_sq`` over *all* iterations so far, not just recorded rows.
    """

    algorithm: str
    columns: dict = field(default_factory=dict)
    final_K: np.ndarray = None
    final_eta: float = float("nan")
    final_omega: np.ndarray = None
    status: str = "ok"
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        for name in COLUMNS:
            dtype = np.int64 if name in INT_COLUMNS else float
            self.columns.setdefault(name, np.empty(0, dtype=dtype))

    def __len__(self):
        return len(self.columns["iter"])

    def __getitem__(self, name):
        return self.columns[name]

    def rows(self):
        for i in range(len(self)):
            yield {name: self.columns[name][i] for name in COLUMNS}


class TraceRecorder:
    """Accumulates rows at a fixed stride; always keeps the first and last."""

    def __init__(self, algorithm, stride=1):
        self.algorithm = algorithm
        self.stride = max(1, int(stride))
        self._blocks = {name: [] for name in COLUMNS}
        self._last = None
        self._last_taken = False

    def add(self, block):
        """``block`` maps every column name to equal-length arrays."""
        it = np.asarray(block["iter"], dtype=np.int64)
        if it.size == 0:
            return
        keep = ((it + 1) % self.stride == 0) | (it == 0)
        for name in COLUMNS:
            self._blocks[name].append(np.asarray(block[name])[keep])
        self._last = {name: np.asarray(block[name])[-1:] for name in COLUMNS}
        self._last_taken = bool(keep[-1])

    def finish(self, **final):
        if self._last is not None and not self._last_taken:
            for name in COLUMNS:
                self._blocks[name].append(self._last[name])
            self._last_taken = True
        columns = {}
        for name in COLUMNS:
            dtype = np.int64 if name in INT_COLUMNS else float
            parts = self._blocks[name]
            columns[name] = np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype)
        return RunTrace(self.algorithm, columns, **final)


def prefix_means(values):
    """Sequential running mean, bit-compatible with the trainers' accumulation."""
    out = np.empty(len(values))
    acc = 0.0
    for i, v in enumerate(values):
        acc += float(v)
        out[i] = acc / (i + 1)
    return out
