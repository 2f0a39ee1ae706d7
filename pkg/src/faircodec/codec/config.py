from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

ALPHABET_BOUND = 32  # latents clamp to [-L, L]
ENTROPY_KINDS = ("factorized", "hyperprior-lite")
SURROGATES = ("noise", "straight-through")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CodecConfig:
    """Architecture, objective and training budget of one codec.

    The budget defaults (batch 64, lr 1e-4, 1000 epochs, patience 50) are
    the full-scale protocol; desk-scale runs override them.
    """

    input_size: tuple = (64, 64, 3)
    latent_channels: int = 64
    hidden_channels: int = 32
    downsampling: int = 8
    kernel: int = 3
    groups: int = 8
    entropy_model: str = "factorized"
    hyper_channels: int = 16
    lmbda: float = 0.01
    surrogate: str = "noise"
    progressive_dropout: float = 0.5
    epochs: int = 1000
    batch_size: int = 64
    learning_rate: float = 1e-4
    entropy_lr_scale: float = 10.0
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if len(self.input_size) != 3:
            raise ConfigError("input_size must be (H, W, C)")
        if not self.lmbda > 0:
            raise ConfigError(f"lambda must be > 0, got {self.lmbda}")
        if self.latent_channels % self.groups:
            raise ConfigError(f"latent_channels {self.latent_channels} not divisible by groups {self.groups}")
        if self.entropy_model not in ENTROPY_KINDS:
            raise ConfigError(f"entropy_model must be one of {ENTROPY_KINDS}")
        if self.surrogate not in SURROGATES:
            raise ConfigError(f"surrogate must be one of {SURROGATES}")
        stages = self.downsampling.bit_length() - 1
        if self.downsampling < 2 or 1 << stages != self.downsampling:
            raise ConfigError("downsampling must be a power of two >= 2")
        h, w, _ = self.input_size
        if h % self.downsampling or w % self.downsampling:
            raise ConfigError(f"input {h}x{w} not divisible by downsampling {self.downsampling}")
        if self.entropy_model == "hyperprior-lite" and (h // self.downsampling) % 2:
            raise ConfigError("hyperprior-lite needs an even latent grid")
        if not 0 <= self.progressive_dropout <= 1:
            raise ConfigError("progressive_dropout must lie in [0, 1]")
        if not self.entropy_lr_scale > 0:
            raise ConfigError("entropy_lr_scale must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")

    @property
    def stages(self):
        return self.downsampling.bit_length() - 1

    @property
    def latent_shape(self):
        h, w, _ = self.input_size
        return (h // self.downsampling, w // self.downsampling, self.latent_channels)

    @property
    def pixels(self):
        return self.input_size[0] * self.input_size[1]

    def to_dict(self):
        d = asdict(self)
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown codec config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return CodecConfig.from_dict(d)


RATE_KINDS = {"lambda-index": 0, "progressive-subset": 1}


@dataclass(frozen=True)
class RatePoint:
    """Either the ``value``-th model of a trained lambda grid, or the first
    ``value`` of ``groups`` latent channel groups of one model."""

    kind: str
    value: int
    groups: int = field(default=0)

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ConfigError(f"unknown rate point kind {self.kind!r}")
        if self.kind == "progressive-subset" and not 1 <= self.value <= self.groups:
            raise ConfigError(f"progressive fraction {self.value}/{self.groups} outside 1/K..K/K")
        if self.value < 0 or self.value > 255 or self.groups > 255:
            raise ConfigError("rate point values must fit in one byte")

    @classmethod
    def lambda_index(cls, i):
        return cls("lambda-index", int(i), 0)

    @classmethod
    def progressive(cls, k, groups):
        return cls("progressive-subset", int(k), int(groups))

    @property
    def fraction(self):
        return self.value / self.groups if self.kind == "progressive-subset" else 1.0

    def label(self):
        if self.kind == "lambda-index":
            return f"lambda[{self.value}]"
        return f"{self.value}/{self.groups}"

    def to_dict(self):
        return {"kind": self.kind, "value": self.value, "groups": self.groups}
