from dataclasses import dataclass, asdict
from typing import Optional, Tuple


@dataclass(frozen=True)
class EncoderConfig:
    """
    Network sizes. Defaults: 128-wide 1x1 convolution embedding, 3 attention
    blocks with 4 heads, 256-wide feed-forward, dropout 0.1, heads of widths
    256 and 128 before their output layer.
    """
    d_model: int = 128
    num_blocks: int = 3
    num_heads: int = 4
    ff_dim: int = 256
    dropout: float = 0.1
    max_len: Optional[int] = None
    head_widths: Tuple[int, ...] = (256, 128)
    batch_norm_momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        if self.d_model < 1 or self.num_blocks < 0 or self.num_heads < 1 or self.ff_dim < 1:
            raise ValueError(f"Invalid encoder sizes: {self}")
        if self.d_model % self.num_heads != 0:
            raise ValueError(f"d_model {self.d_model} is not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 <= self.batch_norm_momentum < 1.0:
            raise ValueError(f"batch_norm_momentum must be in [0, 1), got {self.batch_norm_momentum}")
        if not self.head_widths:
            raise ValueError("head_widths needs at least one hidden width")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["head_widths"] = list(self.head_widths)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        return cls(**data)
