"""SplitMix64: the generator behind object sampling in mixing.

Kept in-tree (rather than numpy's bit generators) so the draw sequence is
fixed by this file alone and stays stable across numpy releases.
"""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def sample(self, n: int, r: int) -> list[int]:
        """``r`` indices from range(n): without replacement when r <= n
        (partial Fisher-Yates), otherwise with replacement."""
        if r <= 0 or n <= 0:
            return []
        if r > n:
            return [self.below(n) for _ in range(r)]
        idx = list(range(n))
        for i in range(r):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:r]
