"""Named architecture profiles shared by the trainer, checkpoints and CLI."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Profile:
    """Dimensions of the field network, hypernetwork heads and latent codes.

    "paper" uses the full-scale widths; "test" is the desk-scale profile
    every acceptance run uses. Both share all code paths.
    """

    name: str
    num_bands: int
    field_hidden: int
    head_hidden: int
    fusion_hidden: int
    context_dim: int = 512     # learnable per-video code c
    semantic_dim: int = 512    # frozen semantic code g
    instance_dim: int = 128    # fused instance code m
    field_layers: int = 3      # hidden layers of the field MLP
    head_layers: int = 3       # hidden layers of each hypernetwork head
    fusion_layers: int = 3     # hidden layers of the fusion MLP

    def __post_init__(self):
        for name in ("num_bands", "field_hidden", "head_hidden", "fusion_hidden",
                     "context_dim", "semantic_dim", "instance_dim",
                     "field_layers", "head_layers", "fusion_layers"):
            if getattr(self, name) <= 0:
                raise ValueError(f"profile field {name} must be positive")

    def with_overrides(self, **kw) -> "Profile":
        p = replace(self, **kw)
        if kw and any(k != "name" for k in kw):
            p = replace(p, name="custom")
        return p

    def to_metadata(self) -> dict:
        return {
            "name": self.name,
            "num_bands": self.num_bands,
            "field_hidden": self.field_hidden,
            "head_hidden": self.head_hidden,
            "fusion_hidden": self.fusion_hidden,
            "context_dim": self.context_dim,
            "semantic_dim": self.semantic_dim,
            "instance_dim": self.instance_dim,
            "field_layers": self.field_layers,
            "head_layers": self.head_layers,
            "fusion_layers": self.fusion_layers,
        }

    @classmethod
    def from_metadata(cls, meta: dict) -> "Profile":
        return cls(**meta)


PAPER = Profile("paper", num_bands=8, field_hidden=256, head_hidden=256,
                fusion_hidden=256)
TEST = Profile("test", num_bands=4, field_hidden=64, head_hidden=128,
               fusion_hidden=128)

PROFILES = {"paper": PAPER, "test": TEST}


def get_profile(name: str) -> Profile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(
            f"unknown profile {name!r}; available: {sorted(PROFILES)}"
        ) from None
