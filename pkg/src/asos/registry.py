"""Function registry backing mechanism ``fn_ref`` names.

A mechanism stores only the name of its function; the registry maps names to
:class:`Rule` objects and assigns each name a stable integer id (insertion
order) so operation vectors can reference functions with plain integers.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

from .errors import ContractError, UnknownReference

INSTANCE = "instance"
WORLD = "world"


@dataclass(frozen=True)
class Rule:
    """A callable usable as a mechanism function.

    ``scope == "instance"`` rules are called as ``fn(*source_values)`` once
    per instance (or once per allocation group with array arguments when
    ``vectorized``) and return the target values.  ``scope == "world"`` rules
    are called as ``fn(world, mechanism)`` and do their own reads and writes.
    ``n_in``/``n_out`` of ``None`` accept any arity.
    """

    name: str
    fn: Callable
    n_in: int | None
    n_out: int | None
    scope: str = INSTANCE
    vectorized: bool = False
    calls: frozenset = frozenset()
    genome: tuple | None = None

    def accepts(self, n_in, n_out):
        return (self.n_in is None or self.n_in == n_in) and (
            self.n_out is None or self.n_out == n_out
        )


@dataclass
class FunctionRegistry:
    rules: dict = field(default_factory=dict)
    _ids: dict = field(default_factory=dict)
    _names: list = field(default_factory=list)

    def register(self, rule: Rule, replace=False) -> int:
        if rule.scope not in (INSTANCE, WORLD):
            raise ContractError(f"unknown rule scope {rule.scope!r}")
        if rule.name in self.rules:
            if not replace:
                raise ContractError(f"function {rule.name!r} already registered")
            self.rules[rule.name] = rule
            return self._ids[rule.name]
        self.rules[rule.name] = rule
        self._ids[rule.name] = len(self._names)
        self._names.append(rule.name)
        return self._ids[rule.name]

    def add(self, name, fn, n_in, n_out, **kw) -> Rule:
        rule = Rule(name, fn, n_in, n_out, **kw)
        self.register(rule)
        return rule

    def get(self, name) -> Rule:
        try:
            return self.rules[name]
        except KeyError:
            raise UnknownReference(f"unknown function {name!r}") from None

    def __contains__(self, name):
        return name in self.rules

    def __len__(self):
        return len(self._names)

    def id_of(self, name) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise UnknownReference(f"unknown function {name!r}") from None

    def name_of(self, fn_id) -> str:
        if not 0 <= fn_id < len(self._names):
            raise UnknownReference(f"unknown function id {fn_id}")
        return self._names[fn_id]

    def names(self):
        return list(self._names)

    def register_program(self, genome, ctx=None, name=None) -> str:
        """Decode ``genome`` and register it as an instance-scope rule.

        The default name is derived from the genome's integer encoding, so
        registering the same genome twice is idempotent.
        """
        from .symbolic.cgp import decode_genome, program_rule

        ints = tuple(genome.to_ints())
        if name is None:
            digest = hashlib.sha1(" ".join(map(str, ints)).encode()).hexdigest()[:12]
            name = f"cgp:{digest}"
        if name in self.rules:
            if self.rules[name].genome != ints:
                raise ContractError(f"{name!r} already bound to a different genome")
            return name
        program = decode_genome(genome)
        self.register(program_rule(name, program, ctx, ints))
        return name

    def programs(self):
        """Program-backed rules as ``{name: genome ints}`` for persistence."""
        return {n: list(r.genome) for n, r in self.rules.items() if r.genome is not None}
