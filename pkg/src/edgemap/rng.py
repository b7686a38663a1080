"""Deterministic random number generation.

All randomness in the toolkit flows through PCG32 (the pcg_setseq_64
XSH-RR generator of O'Neill's PCG family) seeded by an explicitly
documented recipe so that datasets, weight initialization, and shuffles
are reproducible bit-for-bit from a single master seed:

    stream hash  h = splitmix64((case_index << 16) ^ stream_tag)
    generator    Pcg32(state_seed = master_seed XOR h, stream = stream_tag)

Gaussian draws use the Box-Muller transform with the second value
cached; bounded integers use a documented modulo reduction. Both are
pinned here (rather than delegated to a library) so any reimplementation
can reproduce the exact draw sequence.
"""

MASK64 = (1 << 64) - 1
_PCG_MULT = 6364136223846793005

# Stream tags: one per consumer so draws never collide across generators.
TAG_POWER = 0x01
TAG_WAVE = 0x02
TAG_PDN = 0x03
TAG_PADS = 0x04
TAG_INIT = 0x05
TAG_SHUFFLE = 0x06
TAG_SPLIT = 0x07


def splitmix64(x):
    """One step of the splitmix64 mixer (Steele/Lea/Flood constants)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


class Pcg32:
    """PCG32: 64-bit state LCG with XSH-RR output, 32-bit draws."""

    def __init__(self, seed, stream=0):
        self.state = 0
        self.inc = ((stream << 1) | 1) & MASK64
        self.next_u32()
        self.state = (self.state + (seed & MASK64)) & MASK64
        self.next_u32()
        self._cached_normal = None

    def next_u32(self):
        old = self.state
        self.state = (old * _PCG_MULT + self.inc) & MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def uniform(self):
        """Uniform float in [0, 1) with 32-bit resolution."""
        return self.next_u32() / 4294967296.0

    def uniform_in(self, lo, hi):
        return lo + (hi - lo) * self.uniform()

    def randint(self, n):
        """Integer in [0, n) via modulo reduction (documented, bias < n/2^32)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        return self.next_u32() % n

    def randint_inclusive(self, lo, hi):
        return lo + self.randint(hi - lo + 1)

    def normal(self):
        """Standard normal via Box-Muller; consumes two draws per pair."""
        if self._cached_normal is not None:
            z = self._cached_normal
            self._cached_normal = None
            return z
        import math

        u1 = (self.next_u32() + 1) / 4294967296.0  # (0, 1]
        u2 = self.next_u32() / 4294967296.0
        r = math.sqrt(-2.0 * math.log(u1))
        self._cached_normal = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


def stream_hash(case_index, stream_tag):
    return splitmix64(((case_index & MASK64) << 16) ^ stream_tag)


def case_rng(master_seed, case_index, stream_tag):
    """Generator for one (case, purpose) pair per the documented recipe."""
    return Pcg32(master_seed ^ stream_hash(case_index, stream_tag), stream=stream_tag)
