"""Named-parameter registry enforcing the freezing policy: the foundation
components never train, everything else does."""

from dataclasses import dataclass, field

import torch


@dataclass
class ParameterRegistry:
    frozen: dict = field(default_factory=dict)      # name -> Parameter
    trainable: dict = field(default_factory=dict)   # name -> Parameter
    groups: dict = field(default_factory=dict)      # name -> owning group

    @classmethod
    def from_model(cls, model):
        reg = cls()
        for name, p in model.named_parameters():
            if name.startswith("foundation."):
                reg.frozen[name] = p
                reg.groups[name] = "foundation"
            else:
                reg.trainable[name] = p
                parts = name.split(".")
                reg.groups[name] = parts[1] if parts[0] == "trainable" else parts[0]
        return reg

    def enforce(self):
        if not self.frozen:
            raise RuntimeError("freezing policy violated: frozen set is empty")
        for p in self.frozen.values():
            p.requires_grad_(False)
        for p in self.trainable.values():
            p.requires_grad_(True)

    def snapshot_frozen(self):
        return {name: p.detach().clone() for name, p in self.frozen.items()}

    def verify_frozen(self, snapshot):
        """Raise if any frozen parameter differs bitwise from the snapshot."""
        for name, ref in snapshot.items():
            cur = self.frozen[name].detach()
            if not torch.equal(cur, ref):
                raise AssertionError(f"frozen parameter {name} changed during training")

    def trainable_count(self) -> int:
        return sum(p.numel() for p in self.trainable.values())

    def manifest(self) -> dict:
        return {
            "frozen": sorted(self.frozen),
            "trainable": sorted(self.trainable),
        }
