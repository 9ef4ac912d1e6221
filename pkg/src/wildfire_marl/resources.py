"""Per-tower resource reserves and support values, stored as integer tenths."""
import logging

import numpy as np

logger = logging.getLogger(__name__)

UNIT = 10  # tenths per 1.0 of resource


class ResourceLedger:
    """Bookkeeping for reserve, support and who allocated what where.

    ``distribute`` and ``deduct`` return ``True`` when accepted. Rejected
    calls leave every array untouched and are logged at debug level.
    """

    def __init__(self, neighbors, n_towers=None):
        self.neighbors = {int(k): frozenset(int(u) for u in v) for k, v in neighbors.items()}
        n = n_towers if n_towers is not None else len(self.neighbors)
        self.n_towers = n
        self.reserve = np.full(n, UNIT, dtype=np.int64)
        self.support = np.zeros(n, dtype=np.int64)
        self.allocation = np.zeros((n, n), dtype=np.int64)
        # targets in the order units were placed, per owner
        self.history = [[] for _ in range(n)]
        self.rejections = []

    def copy(self):
        other = ResourceLedger.__new__(ResourceLedger)
        other.neighbors = self.neighbors
        other.n_towers = self.n_towers
        other.reserve = self.reserve.copy()
        other.support = self.support.copy()
        other.allocation = self.allocation.copy()
        other.history = [list(h) for h in self.history]
        other.rejections = list(self.rejections)
        return other

    def reserve_value(self, tower):
        return self.reserve[tower] / UNIT

    def support_value(self, tower):
        return self.support[tower] / UNIT

    def allocation_values(self):
        return self.allocation / UNIT

    def can_target(self, owner, target):
        return target == owner or target in self.neighbors.get(owner, ())

    def _reject(self, op, owner, target, reason):
        self.rejections.append((op, owner, target, reason))
        logger.debug("rejected %s %d->%d: %s", op, owner, target, reason)
        return False

    def distribute(self, owner, target):
        """Move 0.1 from ``owner``'s reserve to ``target``'s support."""
        if not self.can_target(owner, target):
            return self._reject("distribute", owner, target, "target not in neighbourhood")
        if self.reserve[owner] < 1:
            return self._reject("distribute", owner, target, "insufficient reserve")
        self.reserve[owner] -= 1
        self.support[target] += 1
        self.allocation[owner, target] += 1
        self.history[owner].append(target)
        return True

    def deduct(self, owner, from_target):
        """Pull 0.1 of ``owner``'s own allocation back from ``from_target``.

        Only allowed once the owner's reserve is empty.
        """
        if self.reserve[owner] >= 1:
            return self._reject("deduct", owner, from_target, "reserve not empty")
        if self.allocation[owner, from_target] < 1:
            return self._reject("deduct", owner, from_target, "no allocation at target")
        self.allocation[owner, from_target] -= 1
        self.support[from_target] -= 1
        self.reserve[owner] += 1
        self.history[owner].remove(from_target)
        return True

    def oldest_allocation(self, owner):
        h = self.history[owner]
        return h[0] if h else None

    def total_tenths(self):
        return int(self.reserve.sum() + self.support.sum())

    def check_invariants(self):
        assert self.total_tenths() == UNIT * self.n_towers
        assert (self.reserve >= 0).all() and (self.support >= 0).all() and (self.allocation >= 0).all()
        assert (self.allocation.sum(axis=1) + self.reserve == UNIT).all()
        assert (self.allocation.sum(axis=0) == self.support).all()

    def snapshot(self):
        return {
            "reserve": [v / UNIT for v in self.reserve.tolist()],
            "support": [v / UNIT for v in self.support.tolist()],
        }
