"""Measurement time-series I/O: delimiter-separated text with a fixed header."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonMonotonicTime, ParseError

HEADER = ("time_s", "freq_pu", "volt_pu")


@dataclass
class MeasurementSeries:
    times: np.ndarray  # timestamps (s)
    freq: np.ndarray  # electrical frequency (p.u.)
    volt: np.ndarray  # terminal voltage (p.u.)
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.freq = np.asarray(self.freq, dtype=np.float64)
        self.volt = np.asarray(self.volt, dtype=np.float64)
        if not (self.times.shape == self.freq.shape == self.volt.shape):
            raise ValueError("times, freq and volt must have equal length")

    def __len__(self):
        return self.times.size

    def values(self):
        """Samples as an (n, 2) array in output-channel order."""
        return np.column_stack([self.freq, self.volt])


def parse_measurements(path):
    """Read a measurement file; '#' starts a comment, first row is the header."""
    times, freqs, volts = [], [], []
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            cells = [c.strip() for c in line.split(",")]
            if not header_seen:
                if tuple(cells) != HEADER:
                    raise ParseError(lineno, "expected header " + ",".join(HEADER))
                header_seen = True
                continue
            if len(cells) != 3:
                raise ParseError(lineno, f"expected 3 columns, found {len(cells)}")
            try:
                t, f, v = (float(c) for c in cells)
            except ValueError:
                raise ParseError(lineno, "could not parse row as numbers") from None
            if not (np.isfinite(t) and np.isfinite(f) and np.isfinite(v)):
                raise ParseError(lineno, "non-finite value")
            if times and t <= times[-1]:
                raise NonMonotonicTime(lineno)
            times.append(t)
            freqs.append(f)
            volts.append(v)
    if not header_seen:
        raise ParseError(1, "file contains no header row")
    if not times:
        raise ParseError(1, "file contains no data rows")
    return MeasurementSeries(np.array(times), np.array(freqs), np.array(volts))


def write_measurements(path, times, outputs, comment=None):
    """Write samples in the same format parse_measurements reads.

    Floats use 17 significant digits so a written file re-parses to
    bit-identical values.
    """
    outputs = np.asarray(outputs)
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(HEADER) + "\n")
        for t, (f, v) in zip(times, outputs):
            fh.write(f"{t:.17g},{f:.17g},{v:.17g}\n")
