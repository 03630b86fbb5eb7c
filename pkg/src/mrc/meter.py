from __future__ import annotations

from dataclasses import asdict, dataclass, fields

# Per-module attach overhead in memory units.
DEFAULT_MODULE_OVERHEAD = 50


@dataclass
class CostMeter:
    """Deterministic counters standing in for CPU time and resident memory.

    CPU is modelled as ``tokens_parsed + decls_deserialized``; memory as
    resident declarations plus per-module bookkeeping. Counters only grow.
    """

    tokens_parsed: int = 0
    decls_deserialized: int = 0
    modules_loaded: int = 0
    memory_units: int = 0
    bloom_probes: int = 0
    symtab_scans: int = 0
    libraries_loaded: int = 0

    @property
    def cpu_units(self) -> int:
        return self.tokens_parsed + self.decls_deserialized

    def charge(self, **amounts: int) -> None:
        for name, amount in amounts.items():
            if amount < 0:
                raise ValueError(f"negative charge for {name}: {amount}")
            setattr(self, name, getattr(self, name) + amount)

    def snapshot(self) -> dict[str, int]:
        data = asdict(self)
        data["cpu_units"] = self.cpu_units
        return data

    def copy(self) -> CostMeter:
        return CostMeter(**asdict(self))

    def __sub__(self, other: CostMeter) -> CostMeter:
        return CostMeter(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})
