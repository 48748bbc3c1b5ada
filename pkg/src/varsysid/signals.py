"""Excitation signal builders for synthetic records.

The 3-2-1-1 multistep is the standard flight-test input: four segments with
durations in ratio 3:2:1:1 and alternating sign.
"""

import numpy as np

from .errors import ConfigError


def build_signal(spec, t):
    """Sampled input channel from a signal specification dict."""
    t = np.asarray(t, dtype=float)
    kind = spec.get("kind")
    if kind == "zero":
        return np.zeros_like(t)
    if kind == "constant":
        return np.full_like(t, float(spec["value"]))
    if kind == "step":
        amp = float(spec["amplitude"])
        start = float(spec.get("start", 0.0))
        return np.where(t >= start, amp, 0.0)
    if kind == "doublet":
        amp = float(spec["amplitude"])
        per = float(spec["period"])
        start = float(spec.get("start", 0.0))
        rel = t - start
        out = np.zeros_like(t)
        out[(rel >= 0) & (rel < per)] = amp
        out[(rel >= per) & (rel < 2 * per)] = -amp
        return out
    if kind == "multistep_3211":
        amp = float(spec["amplitude"])
        per = float(spec["base_period"])
        start = float(spec.get("start", 0.0))
        rel = t - start
        out = np.zeros_like(t)
        edges = np.cumsum([0.0, 3 * per, 2 * per, per, per])
        signs = [1.0, -1.0, 1.0, -1.0]
        for lo, hi, sign in zip(edges[:-1], edges[1:], signs):
            out[(rel >= lo) & (rel < hi)] = sign * amp
        return out
    raise ConfigError(f"unknown input signal kind {kind!r}")
