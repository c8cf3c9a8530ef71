"""Uniform-grid trajectories and the batched recursion that produces them."""

from dataclasses import dataclass, field

import numpy as np

NOISE_CHUNK = 4096


@dataclass(frozen=True)
class TrajectoryGrid:
    """States of one path on ``t_n = t0 + n * step``.

    ``states`` has shape ``(N + 1, 2d)`` with positions first, then
    velocities.  ``scheme`` is one of ``"exact"``, ``"ll"``, ``"em"``.
    """

    times: np.ndarray
    states: np.ndarray
    step: float
    scheme: str
    root_seed: int | None = None
    stream_id: int | None = None
    flags: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.states.shape[1] // 2

    @property
    def n_steps(self):
        return self.states.shape[0] - 1

    def x(self, i):
        return self.states[:, i]

    def y(self, i):
        return self.states[:, self.dim + i]

    def truncated(self, n_steps):
        """The same path restricted to its first ``n_steps`` steps."""
        return TrajectoryGrid(
            times=self.times[: n_steps + 1],
            states=self.states[: n_steps + 1],
            step=self.step,
            scheme=self.scheme,
            root_seed=self.root_seed,
            stream_id=self.stream_id,
            flags=dict(self.flags),
        )


def uniform_times(t0, step, n_steps):
    return t0 + step * np.arange(n_steps + 1)


def _matvec(m, x):
    # Column-by-column accumulation keeps each path's arithmetic independent
    # of how many paths share the batch (no BLAS reduction reordering).
    out = m[:, 0, None] * x[0]
    for j in range(1, m.shape[1]):
        out += m[:, j, None] * x[j]
    return out


def gaussian_blocks(stream_list, width, n_steps, scale=1.0, chunk=NOISE_CHUNK):
    """Yield noise blocks of shape ``(len, width, P)`` drawn path by path.

    Path ``p`` consumes ``stream_list[p]`` sequentially, so its draws do not
    depend on the chunk size or on the other paths in the batch.
    """
    gens = [s.generator() for s in stream_list]
    done = 0
    while done < n_steps:
        size = min(chunk, n_steps - done)
        block = np.stack([g.standard_normal((size, width)) for g in gens], axis=-1)
        if scale != 1.0:
            block *= scale
        yield block
        done += size


def linear_recursion(mean_map, noise_map, x0, n_steps, noise, keep=None):
    """Run ``x_{n+1} = mean_map @ x_n + noise_map @ xi_n`` for a batch of paths.

    Parameters
    ----------
    mean_map : ndarray, shape (k, k)
    noise_map : ndarray, shape (k, w)
    x0 : ndarray, shape (k,) or (k, P)
    n_steps : int
    noise : iterable of ndarray
        Blocks of shape ``(len, w, P)`` covering ``n_steps`` steps in order.
    keep : array_like of int, optional
        Step indices to record (default: all ``0..n_steps``).

    Returns
    -------
    ndarray, shape (P, len(keep), k)
    """
    mean_map = np.asarray(mean_map, dtype=float)
    noise_map = np.asarray(noise_map, dtype=float)
    keep = np.arange(n_steps + 1) if keep is None else np.asarray(keep, dtype=int)
    pos = 0
    out = None
    x = None
    n = 0
    for block in noise:
        if x is None:
            n_paths = block.shape[-1]
            x = np.array(np.broadcast_to(np.asarray(x0, dtype=float).reshape(mean_map.shape[0], -1),
                                         (mean_map.shape[0], n_paths)))
            out = np.empty((keep.size, mean_map.shape[0], n_paths))
            while pos < keep.size and keep[pos] == 0:
                out[pos] = x
                pos += 1
        for xi in block:
            x = _matvec(mean_map, x) + _matvec(noise_map, xi)
            n += 1
            while pos < keep.size and keep[pos] == n:
                out[pos] = x
                pos += 1
    if x is None:
        x = np.asarray(x0, dtype=float).reshape(mean_map.shape[0], -1)
        out = np.repeat(x[None], keep.size, axis=0)
    if n != n_steps:
        raise ValueError(f"noise covered {n} steps, expected {n_steps}")
    return np.transpose(out, (2, 0, 1))
