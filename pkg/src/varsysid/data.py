"""In-memory dataset record: uniformly sampled inputs and outputs."""

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError

TIME_UNIFORMITY_REL_TOL = 1e-6


@dataclass(frozen=True)
class Dataset:
    """Uniformly sampled input/output record.

    ``y_mask`` flags observed entries (True = present); masked entries take
    part in no computation. Non-finite values are only allowed where masked.
    """

    period: float
    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    y_mask: np.ndarray = None
    input_names: tuple = ()
    output_names: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if u.shape[0] != t.shape[0] or y.shape[0] != t.shape[0]:
            raise DataFormatError(
                f"t, u, y must share sample count; got {t.shape[0]}, "
                f"{u.shape[0]}, {y.shape[0]}")
        mask = self.y_mask
        mask = np.ones(y.shape, dtype=bool) if mask is None else np.asarray(
            mask, dtype=bool)
        if mask.shape != y.shape:
            raise DataFormatError("y_mask shape must match y")
        if self.period <= 0:
            raise DataFormatError(f"sampling period must be positive, "
                                  f"got {self.period}")
        gaps = np.diff(t)
        bad = np.abs(gaps - self.period) > TIME_UNIFORMITY_REL_TOL * self.period
        if bad.any():
            k = int(np.argmax(bad))
            raise DataFormatError(
                f"non-uniform sampling at index {k}: gap {gaps[k]:.9g} vs "
                f"period {self.period:.9g}")
        if not np.all(np.isfinite(u)):
            raise DataFormatError("non-finite input value")
        if not np.all(np.isfinite(y[mask])):
            raise DataFormatError("non-finite output value outside mask")
        y = y.copy()
        y[~mask] = 0.0  # masked entries take part in no computation
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_mask", mask)
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "output_names", tuple(self.output_names))

    @property
    def num_steps(self):
        """N, the number of transitions; the record holds N+1 samples."""
        return self.t.shape[0] - 1

    @property
    def nu(self):
        return self.u.shape[1]

    @property
    def ny(self):
        return self.y.shape[1]

    def mask_groups(self):
        """Group sample indices by identical observation pattern.

        Returns a list of (observed_channels bool (ny,), sample_indices)
        with all-missing samples omitted.
        """
        patterns = {}
        for k, row in enumerate(self.y_mask):
            patterns.setdefault(row.tobytes(), []).append(k)
        groups = []
        for key, idx in patterns.items():
            obs = np.frombuffer(key, dtype=bool)
            if obs.any():
                groups.append((obs, np.asarray(idx)))
        return groups


def make_dataset(period, u, y, y_mask=None, t0=0.0, **names):
    """Dataset with an implied uniform time base."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    t = t0 + period * np.arange(y.shape[0])
    return Dataset(period=period, t=t, u=u, y=y, y_mask=y_mask, **names)
