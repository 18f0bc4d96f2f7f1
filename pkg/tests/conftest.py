"""Shared test helpers."""


class ScriptedRng:
    """Duck-typed stand-in for SeededRng with scripted draws.

    randint pops from `ints`, random pops from `floats`; shuffle applies
    a fixed permutation (identity by default).
    """

    def __init__(self, ints=(), floats=(), permutation=None):
        self.ints = list(ints)
        self.floats = list(floats)
        self.permutation = permutation

    def randint(self, lo, hi):
        value = self.ints.pop(0)
        assert lo <= value <= hi, f"scripted draw {value} outside [{lo}, {hi}]"
        return value

    def random(self):
        return self.floats.pop(0)

    def shuffle(self, items):
        if self.permutation is not None:
            items[:] = [items[i] for i in self.permutation]
