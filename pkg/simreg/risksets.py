"""Risk-set bookkeeping over distinct event times."""

import numpy as np

from .exceptions import DataError


class RiskSets:
    """Distinct event times t_1 < ... < t_K of a right-censored sample.

    Subject i is at risk at t_k iff t_k <= T_i, i.e. iff k < exit[i], where
    exit[i] counts the event times not after T_i.
    """

    def __init__(self, time: np.ndarray, event: np.ndarray):
        time = np.asarray(time, dtype=float)
        event = np.asarray(event).astype(bool)
        if time.shape != event.shape:
            raise DataError("time and event must have the same length")
        self.n = time.shape[0]
        self.event = event
        self.delta = event.astype(float)
        self.event_times = np.unique(time[event])
        self.exit = np.searchsorted(self.event_times, time, side="right")
        # index of the subject's own event time; -1 when censored
        self.event_index = np.where(event, self.exit - 1, -1)
        self.deaths = np.bincount(self.exit[event] - 1, minlength=self.n_times).astype(float)

    @property
    def n_times(self) -> int:
        return self.event_times.shape[0]

    def at_risk(self) -> np.ndarray:
        """n x K indicator Y_ik."""
        return self.exit[:, None] > np.arange(self.n_times)[None, :]

    def risk_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum of per-subject values over each risk set; shape (K, ...)."""
        values = np.asarray(values, dtype=float)
        agg = np.zeros((self.n_times + 1,) + values.shape[1:])
        np.add.at(agg, self.exit, values)
        tail = np.cumsum(agg[::-1], axis=0)[::-1]
        return tail[1:]

    def accumulate(self, per_time: np.ndarray) -> np.ndarray:
        """Sum of per-event-time values over t_k <= T_i, evaluated for each subject."""
        per_time = np.asarray(per_time, dtype=float)
        padded = np.concatenate((np.zeros((1,) + per_time.shape[1:]), np.cumsum(per_time, axis=0)))
        return padded[self.exit]

    def at_event(self, per_time: np.ndarray) -> np.ndarray:
        """Value at the subject's own event time; zero rows for censored subjects."""
        per_time = np.asarray(per_time, dtype=float)
        out = np.zeros((self.n,) + per_time.shape[1:])
        out[self.event] = per_time[self.event_index[self.event]]
        return out
